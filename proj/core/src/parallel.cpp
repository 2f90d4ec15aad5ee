#include "cgo/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace cgo {

namespace {
std::atomic<int> g_threads{1};
// Set inside worker bodies; nested loops then run inline.
thread_local bool t_inside = false;

struct InsideGuard {
  bool saved;
  InsideGuard() : saved(t_inside) { t_inside = true; }
  ~InsideGuard() { t_inside = saved; }
};
}

void set_num_threads(int n) {
  if (n < 1) throw std::invalid_argument("thread count must be >= 1");
  g_threads.store(n);
}

int num_threads() { return g_threads.load(); }

void parallel_for(std::size_t count, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  if (count == 0) return;
  if (grain == 0) grain = 1;
  const std::size_t chunks = (count + grain - 1) / grain;
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(num_threads()), chunks);

  auto run_chunk = [&](std::size_t c) {
    const std::size_t b = c * grain;
    body(b, std::min(b + grain, count));
  };

  if (workers <= 1 || t_inside) {
    for (std::size_t c = 0; c < chunks; ++c) run_chunk(c);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto worker = [&] {
    for (;;) {
      const std::size_t c = next.fetch_add(1);
      if (c >= chunks) return;
      try {
        InsideGuard guard;
        run_chunk(c);
      } catch (...) {
        std::lock_guard<std::mutex> lk(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace cgo
