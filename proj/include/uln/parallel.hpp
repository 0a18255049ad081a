#pragma once

#include <condition_variable>
#include <cstddef>
#include <deque>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace uln {

/// Runs body(i) for i in [0, n). Implementations may run iterations
/// concurrently; the first exception thrown by any iteration is rethrown.
using ParallelFor = std::function<void(std::size_t n, const std::function<void(std::size_t)>& body)>;

void sequential_for(std::size_t n, const std::function<void(std::size_t)>& body);

class ThreadPool {
 public:
  explicit ThreadPool(std::size_t workers);
  ~ThreadPool();
  ThreadPool(const ThreadPool&) = delete;
  ThreadPool& operator=(const ThreadPool&) = delete;

  std::size_t size() const { return threads_.size(); }
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);
  ParallelFor as_parallel_for();

 private:
  void worker_loop();

  std::vector<std::thread> threads_;
  std::deque<std::function<void()>> queue_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool stop_ = false;
};

/// Default worker count: ULN_WORKERS if set to a positive integer, otherwise
/// the number of logical CPUs.
std::size_t default_worker_count();

}  // namespace uln
