#include "uln/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace uln {

void sequential_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  for (std::size_t i = 0; i < n; ++i) body(i);
}

ThreadPool::ThreadPool(std::size_t workers) {
  if (workers == 0) workers = 1;
  for (std::size_t i = 0; i < workers; ++i) threads_.emplace_back([this] { worker_loop(); });
}

ThreadPool::~ThreadPool() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    stop_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void ThreadPool::worker_loop() {
  for (;;) {
    std::function<void()> job;
    {
      std::unique_lock<std::mutex> lock(mu_);
      cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
      if (queue_.empty()) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    job();
  }
}

void ThreadPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  std::atomic<std::size_t> next{0};
  std::size_t remaining = 0;
  std::mutex done_mu;
  std::condition_variable done_cv;
  std::exception_ptr first_error;

  const std::size_t lanes = std::min(n, threads_.size());
  remaining = lanes;
  auto lane = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(done_mu);
        if (!first_error) first_error = std::current_exception();
        next.store(n);
      }
    }
    std::lock_guard<std::mutex> lock(done_mu);
    if (--remaining == 0) done_cv.notify_one();
  };
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (std::size_t i = 0; i < lanes; ++i) queue_.emplace_back(lane);
  }
  cv_.notify_all();
  std::unique_lock<std::mutex> lock(done_mu);
  done_cv.wait(lock, [&] { return remaining == 0; });
  if (first_error) std::rethrow_exception(first_error);
}

ParallelFor ThreadPool::as_parallel_for() {
  return [this](std::size_t n, const std::function<void(std::size_t)>& body) { parallel_for(n, body); };
}

std::size_t default_worker_count() {
  if (const char* env = std::getenv("ULN_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (...) {
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

}  // namespace uln
