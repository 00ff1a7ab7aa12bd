#include "stiv/comm.hpp"

#include <exception>
#include <thread>

namespace stiv::comm {

namespace detail {

void AbortableBarrier::arrive_and_wait() {
  std::unique_lock lock(mutex_);
  if (aborted_) throw CommError("communicator aborted by a failing peer rank");
  const auto gen = generation_;
  if (++waiting_ == parties_) {
    waiting_ = 0;
    ++generation_;
    cv_.notify_all();
    return;
  }
  cv_.wait(lock, [&] { return generation_ != gen || aborted_; });
  if (generation_ == gen) throw CommError("communicator aborted by a failing peer rank");
}

void AbortableBarrier::abort() {
  std::lock_guard lock(mutex_);
  aborted_ = true;
  cv_.notify_all();
}

bool AbortableBarrier::aborted() const {
  std::lock_guard lock(mutex_);
  return aborted_;
}

}  // namespace detail

World::World(int size) : size_(size), barrier_(size), slots_(static_cast<std::size_t>(size) * size) {
  if (size <= 0) throw CommError("communicator size must be positive, got " + std::to_string(size));
}

Communicator::Communicator(std::shared_ptr<World> world, int rank)
    : world_(std::move(world)), rank_(rank) {
  if (!world_) throw CommError("communicator without world");
  if (rank_ < 0 || rank_ >= world_->size()) {
    throw CommError("rank " + std::to_string(rank_) + " outside [0, " +
                    std::to_string(world_->size()) + ")");
  }
}

void Communicator::barrier() { world_->barrier_.arrive_and_wait(); }

std::int64_t Communicator::scan_exclusive(std::int64_t local_count) {
  if (local_count < 0) {
    throw CommError("scan_exclusive: negative local count");
  }
  const auto counts = allgather(local_count);
  std::int64_t offset = 0;
  for (int q = 0; q < rank_; ++q) offset += counts[q];
  return offset;
}

void run_ranks(int size, const std::function<void(Communicator&)>& body) {
  auto world = std::make_shared<World>(size);
  if (size == 1) {
    Communicator comm(world, 0);
    body(comm);
    return;
  }
  std::mutex error_mutex;
  std::exception_ptr first_error;
  {
    std::vector<std::jthread> threads;
    threads.reserve(size);
    for (int r = 0; r < size; ++r) {
      threads.emplace_back([&, r] {
        try {
          Communicator comm(world, r);
          body(comm);
        } catch (...) {
          // Peers only fail after the abort below, so the first recorded
          // exception is the root cause.
          {
            std::lock_guard lock(error_mutex);
            if (!first_error) first_error = std::current_exception();
          }
          world->abort();
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

std::pair<std::int64_t, std::int64_t> block_range(std::int64_t count, int rank, int size) {
  const std::int64_t begin = count * rank / size;
  const std::int64_t end = count * (rank + 1) / size;
  return {begin, end};
}

}  // namespace stiv::comm
