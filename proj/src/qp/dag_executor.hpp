#pragma once

#include <condition_variable>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace mocap::qp::detail {

/// Runs task(v) for every node of a DAG once all of its predecessors are
/// done. `pending[v]` is the predecessor count, `next[v]` the successors.
/// With threads <= 1 everything runs on the calling thread.
inline void run_dag(std::vector<int> pending, const std::vector<std::vector<int>>& next,
                    const std::function<void(int)>& task, int threads) {
  const int n = static_cast<int>(pending.size());
  std::deque<int> ready;
  for (int v = 0; v < n; ++v)
    if (pending[v] == 0) ready.push_back(v);

  if (threads <= 1) {
    while (!ready.empty()) {
      const int v = ready.front();
      ready.pop_front();
      task(v);
      for (int w : next[v])
        if (--pending[w] == 0) ready.push_back(w);
    }
    return;
  }

  std::mutex mu;
  std::condition_variable cv;
  int done = 0;
  std::exception_ptr error;

  auto worker = [&] {
    std::unique_lock lock(mu);
    for (;;) {
      cv.wait(lock, [&] { return !ready.empty() || done == n || error; });
      if (done == n || error) return;
      const int v = ready.front();
      ready.pop_front();
      lock.unlock();
      try {
        task(v);
      } catch (...) {
        lock.lock();
        if (!error) error = std::current_exception();
        cv.notify_all();
        return;
      }
      lock.lock();
      ++done;
      for (int w : next[v])
        if (--pending[w] == 0) ready.push_back(w);
      cv.notify_all();
    }
  };

  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  pool.clear();
  if (error) std::rethrow_exception(error);
}

}  // namespace mocap::qp::detail
