#pragma once

#include <cstdint>

#include "samplepilot/table.hpp"

namespace samplepilot {

// Flights-like table with planted structure: seasonal delay peaks, skewed
// carrier/origin frequencies with a few rare groups, and origin-dependent
// cancellations. Columns: flight_id, month, day_of_week, carrier, origin,
// distance, dep_delay, arr_delay, cancelled.
Table make_flights_table(std::size_t rows, std::uint64_t seed);

}  // namespace samplepilot
