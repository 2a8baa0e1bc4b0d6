#pragma once

#include <cstddef>
#include <functional>

namespace vns {

/// Worker count: VNS_THREADS if set and positive, else hardware concurrency.
int worker_count();

/// True when VNS_DETERMINISTIC=1.
bool deterministic_env();

/// Splits [0, n) into `chunks` contiguous ranges with boundaries that depend
/// only on n and chunks.
struct ChunkRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};
ChunkRange chunk_range(std::size_t n, int chunks, int index);

/// Runs body(chunk_index, begin, end) over a fixed partition of [0, n) into
/// `chunks` pieces (default worker_count()) on at most worker_count()
/// threads. Blocks until every chunk is done. Exceptions thrown
/// by a chunk are rethrown (the first one by chunk index).
void parallel_chunks(std::size_t n, const std::function<void(int, std::size_t, std::size_t)>& body,
                     int chunks = 0);

}  // namespace vns
