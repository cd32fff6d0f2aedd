#pragma once

#include <cstdint>

// Entry points of the optional global allocation hook (sat_memtrack). They
// are declared weak by the profiler so binaries that do not link the hook
// still build.
extern "C" {
std::int64_t sat_memtrack_live_bytes();
std::int64_t sat_memtrack_peak_bytes();
void sat_memtrack_reset_peak();
}
