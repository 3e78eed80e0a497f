#include "samplepilot/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "samplepilot/rng.hpp"

namespace samplepilot {

namespace {

double round1(double v) { return std::round(v * 10.0) / 10.0; }

}  // namespace

Table make_flights_table(std::size_t rows, std::uint64_t seed) {
  static const std::array<const char*, 12> kMonths{"JAN", "FEB", "MAR", "APR", "MAY", "JUN",
                                                   "JUL", "AUG", "SEP", "OCT", "NOV", "DEC"};
  static const std::array<double, 12> kMonthWeight{0.080, 0.075, 0.085, 0.082, 0.086, 0.090,
                                                   0.092, 0.088, 0.078, 0.080, 0.079, 0.085};
  static const std::array<double, 12> kMonthLate{0.20, 0.17, 0.15, 0.14, 0.16, 0.27,
                                                 0.29, 0.22, 0.12, 0.13, 0.16, 0.26};
  static const std::array<double, 12> kMonthCancel{0.045, 0.040, 0.020, 0.012, 0.012, 0.018,
                                                   0.020, 0.016, 0.010, 0.010, 0.015, 0.030};
  static const std::array<const char*, 7> kDays{"MON", "TUE", "WED", "THU", "FRI", "SAT", "SUN"};
  static const std::array<double, 7> kDayWeight{0.150, 0.140, 0.140, 0.145, 0.155, 0.120, 0.150};
  static const std::array<const char*, 10> kCarriers{"AA", "DL", "UA", "WN", "B6", "AS", "NK", "F9", "HA", "G4"};
  static const std::array<double, 10> kCarrierWeight{0.22, 0.18, 0.15, 0.12, 0.10, 0.08, 0.06, 0.05, 0.025, 0.015};
  static const std::array<double, 10> kCarrierLate{0.95, 0.80, 0.90, 1.00, 1.25, 0.75, 1.45, 1.35, 0.70, 1.55};
  static const std::array<const char*, 15> kOrigins{"ATL", "ORD", "DFW", "DEN", "LAX", "JFK", "SFO", "SEA",
                                                    "LAS", "MCO", "BOS", "MSP", "DTW", "PHL", "ANC"};
  static const std::array<double, 15> kOriginWeight{0.14, 0.12, 0.11, 0.095, 0.09, 0.08, 0.07, 0.06,
                                                    0.055, 0.05, 0.04, 0.035, 0.025, 0.015, 0.005};
  static const std::array<double, 15> kOriginHub{900, 850, 900, 1000, 1500, 1400, 1500, 1300,
                                                 800, 950, 1200, 900, 800, 1100, 1700};
  static const std::array<double, 15> kOriginCancel{1.0, 1.8, 1.1, 1.5, 0.6, 1.3, 0.9, 0.8,
                                                    0.5, 0.9, 1.6, 1.4, 1.2, 1.0, 2.5};

  Rng rng(seed);
  std::vector<double> id, distance, dep, arr, cancelled;
  std::vector<std::string> month, day, carrier, origin;
  id.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto m = rng.categorical(kMonthWeight);
    const auto d = rng.categorical(kDayWeight);
    const auto c = rng.categorical(kCarrierWeight);
    const auto o = rng.categorical(kOriginWeight);
    id.push_back(static_cast<double>(r + 1));
    month.emplace_back(kMonths[m]);
    day.emplace_back(kDays[d]);
    carrier.emplace_back(kCarriers[c]);
    origin.emplace_back(kOrigins[o]);

    const double dist = std::clamp(kOriginHub[o] * std::exp(0.45 * rng.normal()), 120.0, 4000.0);
    distance.push_back(round1(dist));

    const double p_late = std::min(0.9, kMonthLate[m] * kCarrierLate[c] * (d == 4 || d == 6 ? 1.15 : 1.0));
    double delay;
    if (rng.bernoulli(p_late)) {
      delay = 5.0 - 40.0 * std::log(1.0 - rng.uniform());
    } else {
      delay = -2.0 + 6.0 * rng.normal();
    }
    delay = std::min(delay, 600.0);
    dep.push_back(round1(delay));
    arr.push_back(round1(delay - 0.004 * dist + 8.0 * rng.normal()));
    const double p_cancel = std::min(0.5, kMonthCancel[m] * kOriginCancel[o]);
    cancelled.push_back(rng.bernoulli(p_cancel) ? 1.0 : 0.0);
  }

  return Table("flights_synth",
               {Column::integer("flight_id", std::move(id)), Column::categorical("month", month),
                Column::categorical("day_of_week", day), Column::categorical("carrier", carrier),
                Column::categorical("origin", origin), Column::real("distance", std::move(distance)),
                Column::real("dep_delay", std::move(dep)), Column::real("arr_delay", std::move(arr)),
                Column::integer("cancelled", std::move(cancelled))});
}

}  // namespace samplepilot
