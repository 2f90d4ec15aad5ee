#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace cgo {

// Worker count used by the field kernels. Work is always cut into chunks
// whose boundaries depend only on the problem size, never on this value,
// so results are bitwise reproducible across thread counts. Nested calls
// from inside a worker run serially on that worker.
void set_num_threads(int n);
int num_threads();

void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

// Sum of body(begin, end) over fixed chunks, combined in chunk order.
template <class T, class F>
T parallel_sum(std::size_t count, std::size_t grain, F&& body, T zero = T{}) {
  if (count == 0) return zero;
  const std::size_t chunks = (count + grain - 1) / grain;
  std::vector<T> partial(chunks, zero);
  parallel_for(chunks, 1, [&](std::size_t c0, std::size_t c1) {
    for (std::size_t c = c0; c < c1; ++c) {
      const std::size_t b = c * grain;
      const std::size_t e = b + grain < count ? b + grain : count;
      partial[c] = body(b, e);
    }
  });
  T acc = zero;
  for (const T& p : partial) acc += p;
  return acc;
}

}  // namespace cgo
