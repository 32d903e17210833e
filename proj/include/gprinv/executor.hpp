#pragma once

#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace gprinv {

/// Fixed set of threads that run index-parallel loops. Work items must not
/// depend on which thread or in which order they run.
class WorkerPool {
 public:
  /// 0 picks std::thread::hardware_concurrency(); 1 runs everything inline.
  explicit WorkerPool(std::size_t workers = 0);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const { return size_; }

  /// Calls fn(i) for every i in [0, n) and waits. If any call throws, the
  /// exception from the lowest index is rethrown after all calls finish.
  void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

 private:
  void worker_loop();

  std::size_t size_ = 1;
  std::vector<std::thread> threads_;
  std::mutex mutex_;
  std::condition_variable wake_;
  std::condition_variable done_;
  const std::function<void(std::size_t)>* job_ = nullptr;
  std::size_t job_size_ = 0;
  std::size_t next_ = 0;
  std::size_t finished_ = 0;
  std::size_t generation_ = 0;
  bool stop_ = false;
  std::vector<std::exception_ptr> errors_;
};

/// Runs fn(i) for i in [0, n), on the pool when one is given, inline otherwise.
void for_each_index(WorkerPool* pool, std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace gprinv
