#include "gprinv/executor.hpp"

#include <algorithm>
#include <exception>

namespace gprinv {

WorkerPool::WorkerPool(std::size_t workers) {
  if (workers == 0) workers = std::max(1U, std::thread::hardware_concurrency());
  size_ = workers;
  if (size_ > 1) {
    threads_.reserve(size_);
    for (std::size_t i = 0; i < size_; ++i) threads_.emplace_back([this] { worker_loop(); });
  }
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  wake_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::worker_loop() {
  std::size_t seen = 0;
  std::unique_lock lock(mutex_);
  for (;;) {
    wake_.wait(lock, [&] { return stop_ || generation_ != seen; });
    if (stop_) return;
    seen = generation_;
    while (next_ < job_size_) {
      const std::size_t i = next_++;
      const auto* job = job_;
      lock.unlock();
      std::exception_ptr err;
      try {
        (*job)(i);
      } catch (...) {
        err = std::current_exception();
      }
      lock.lock();
      if (err) errors_[i] = err;
      if (++finished_ == job_size_) done_.notify_all();
    }
  }
}

void WorkerPool::parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  if (threads_.empty() || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::unique_lock lock(mutex_);
  job_ = &fn;
  job_size_ = n;
  next_ = 0;
  finished_ = 0;
  errors_.assign(n, nullptr);
  ++generation_;
  wake_.notify_all();
  done_.wait(lock, [&] { return finished_ == job_size_; });
  job_ = nullptr;
  job_size_ = 0;
  for (auto& e : errors_) {
    if (e) std::rethrow_exception(e);
  }
}

void for_each_index(WorkerPool* pool, std::size_t n, const std::function<void(std::size_t)>& fn) {
  if (pool) {
    pool->parallel_for(n, fn);
  } else {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace gprinv
