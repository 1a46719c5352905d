#pragma once

namespace netcausal {

/// Keeps large freed blocks in the heap instead of returning them to the
/// OS. Training allocates and frees the same megabyte-sized buffers every
/// epoch; without this glibc maps and unmaps them each time. No-op on
/// other C libraries. Call once at program start.
void tune_allocator();

}  // namespace netcausal
