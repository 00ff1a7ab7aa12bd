#pragma once

// In-process communicator. Each virtual rank runs on its own thread and owns
// one Communicator; collectives synchronize through a shared World.

#include <algorithm>
#include <any>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace stiv::comm {

class CommError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A record received through sparse_all_to_all, tagged with its sender.
template <class T>
struct Envelope {
  int source = 0;
  T payload{};
};

template <class K, class V>
struct SortedRun {
  std::vector<K> keys;
  std::vector<V> values;
};

namespace detail {

// Reusable barrier that can be aborted when a peer rank fails, so that the
// remaining ranks raise instead of waiting forever.
class AbortableBarrier {
 public:
  explicit AbortableBarrier(int parties) : parties_(parties) {}

  void arrive_and_wait();
  void abort();
  bool aborted() const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  int parties_;
  int waiting_ = 0;
  std::uint64_t generation_ = 0;
  bool aborted_ = false;
};

}  // namespace detail

/// Shared state for one group of virtual ranks.
class World {
 public:
  explicit World(int size);

  int size() const { return size_; }
  void abort() { barrier_.abort(); }

 private:
  friend class Communicator;

  int size_;
  detail::AbortableBarrier barrier_;
  // slots_[src * size + dst]
  std::vector<std::any> slots_;
};

class Communicator {
 public:
  Communicator(std::shared_ptr<World> world, int rank);

  int rank() const { return rank_; }
  int size() const { return world_->size(); }

  void barrier();

  /// Dense personalized exchange: outgoing[q] goes to rank q. Returns the
  /// vectors received, indexed by source rank.
  template <class T>
  std::vector<std::vector<T>> exchange(std::vector<std::vector<T>> outgoing);

  template <class T>
  std::vector<T> allgather(const T& value);

  /// Per-rank vectors concatenated in rank order.
  template <class T>
  std::vector<T> allgatherv(const std::vector<T>& local);

  /// Sum of local_count over ranks 0..rank-1.
  std::int64_t scan_exclusive(std::int64_t local_count);

  /// Received records ordered by source rank, then by send order.
  template <class T>
  std::vector<Envelope<T>> sparse_all_to_all(const std::map<int, std::vector<T>>& outgoing);

  /// Global sort by key. Concatenating the per-rank results in rank order gives
  /// the sequence sorted by (key, origin rank, origin index). All records with
  /// equal keys land on one rank; otherwise ranks receive ceil(N/P)-balanced
  /// shares.
  template <class K, class V>
  SortedRun<K, V> sort_by_key(std::vector<K> keys, std::vector<V> values);

 private:
  std::shared_ptr<World> world_;
  int rank_;
};

/// Runs `body` on `size` virtual ranks and joins them. If any rank throws,
/// peers blocked in collectives are released with CommError and the first
/// original exception is rethrown here.
void run_ranks(int size, const std::function<void(Communicator&)>& body);

/// Half-open [begin, end) block of `count` items owned by `rank`.
std::pair<std::int64_t, std::int64_t> block_range(std::int64_t count, int rank, int size);

// ---------------------------------------------------------------------------

template <class T>
std::vector<std::vector<T>> Communicator::exchange(std::vector<std::vector<T>> outgoing) {
  const int p = size();
  if (static_cast<int>(outgoing.size()) != p) {
    throw CommError("exchange: outgoing has " + std::to_string(outgoing.size()) +
                    " destinations for " + std::to_string(p) + " ranks");
  }
  for (int dst = 0; dst < p; ++dst) {
    world_->slots_[static_cast<std::size_t>(rank_ * p + dst)] = std::move(outgoing[dst]);
  }
  barrier();
  std::vector<std::vector<T>> incoming(p);
  for (int src = 0; src < p; ++src) {
    auto& slot = world_->slots_[static_cast<std::size_t>(src * p + rank_)];
    auto* data = std::any_cast<std::vector<T>>(&slot);
    if (data == nullptr) {
      throw CommError("exchange: record type mismatch from rank " + std::to_string(src));
    }
    incoming[src] = std::move(*data);
    slot.reset();
  }
  barrier();
  return incoming;
}

template <class T>
std::vector<T> Communicator::allgather(const T& value) {
  std::vector<std::vector<T>> out(size(), std::vector<T>{value});
  auto in = exchange(std::move(out));
  std::vector<T> result;
  result.reserve(in.size());
  for (auto& v : in) result.push_back(std::move(v.front()));
  return result;
}

template <class T>
std::vector<T> Communicator::allgatherv(const std::vector<T>& local) {
  std::vector<std::vector<T>> out(size(), local);
  auto in = exchange(std::move(out));
  std::vector<T> result;
  for (auto& v : in) result.insert(result.end(), v.begin(), v.end());
  return result;
}

template <class T>
std::vector<Envelope<T>> Communicator::sparse_all_to_all(
    const std::map<int, std::vector<T>>& outgoing) {
  std::vector<std::vector<T>> dense(size());
  bool bad = false;
  int bad_rank = 0;
  for (const auto& [dst, records] : outgoing) {
    if (dst < 0 || dst >= size()) {
      bad = true;
      bad_rank = dst;
      continue;
    }
    dense[dst].insert(dense[dst].end(), records.begin(), records.end());
  }
  // Every rank must agree before anyone throws, or peers would deadlock.
  const auto flags = allgather(static_cast<int>(bad));
  if (bad) {
    throw CommError("sparse_all_to_all: destination rank " + std::to_string(bad_rank) +
                    " out of range [0, " + std::to_string(size()) + ")");
  }
  if (std::any_of(flags.begin(), flags.end(), [](int f) { return f != 0; })) {
    throw CommError("sparse_all_to_all: a peer rank passed an invalid destination");
  }
  auto in = exchange(std::move(dense));
  std::vector<Envelope<T>> result;
  for (int src = 0; src < size(); ++src) {
    for (auto& r : in[src]) result.push_back(Envelope<T>{src, std::move(r)});
  }
  return result;
}

template <class K, class V>
SortedRun<K, V> Communicator::sort_by_key(std::vector<K> keys, std::vector<V> values) {
  const int p = size();
  const int bad = keys.size() != values.size() ? 1 : 0;
  const auto flags = allgather(bad);
  if (bad) {
    throw CommError("sort_by_key: " + std::to_string(keys.size()) + " keys but " +
                    std::to_string(values.size()) + " values");
  }
  if (std::any_of(flags.begin(), flags.end(), [](int f) { return f != 0; })) {
    throw CommError("sort_by_key: a peer rank passed mismatched keys/values");
  }

  // Local stable sort; origin index breaks ties.
  std::vector<std::size_t> order(keys.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });
  std::vector<K> local_keys;
  local_keys.reserve(order.size());
  for (auto i : order) local_keys.push_back(keys[i]);

  // Splitter selection from the gathered key sequences (keys only; values
  // move once, directly to their destination).
  const auto counts = allgather(static_cast<std::int64_t>(local_keys.size()));
  const auto all_keys = allgatherv(local_keys);
  std::vector<std::int64_t> starts(p + 1, 0);
  for (int q = 0; q < p; ++q) starts[q + 1] = starts[q] + counts[q];
  const std::int64_t total = starts[p];

  // Global merged order of (key, rank, local position); runs are sorted already.
  std::vector<std::int64_t> merged(static_cast<std::size_t>(total));
  std::iota(merged.begin(), merged.end(), std::int64_t{0});
  std::stable_sort(merged.begin(), merged.end(), [&](std::int64_t a, std::int64_t b) {
    return all_keys[static_cast<std::size_t>(a)] < all_keys[static_cast<std::size_t>(b)];
  });
  std::vector<std::int64_t> position_of(static_cast<std::size_t>(total));
  for (std::int64_t pos = 0; pos < total; ++pos) {
    position_of[static_cast<std::size_t>(merged[static_cast<std::size_t>(pos)])] = pos;
  }

  // Balanced boundaries, pushed forward to the end of any equal-key group.
  std::vector<std::int64_t> bounds(p + 1, total);
  bounds[0] = 0;
  for (int q = 1; q < p; ++q) {
    std::int64_t b = std::max(bounds[q - 1], (total * q) / p);
    while (b > 0 && b < total &&
           !(all_keys[static_cast<std::size_t>(merged[static_cast<std::size_t>(b - 1)])] <
             all_keys[static_cast<std::size_t>(merged[static_cast<std::size_t>(b)])])) {
      ++b;
    }
    bounds[q] = b;
  }

  struct Item {
    std::int64_t position;
    K key;
    V value;
  };
  std::vector<std::vector<Item>> out(p);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::int64_t pos = position_of[static_cast<std::size_t>(starts[rank_]) + i];
    const int dst = static_cast<int>(std::upper_bound(bounds.begin(), bounds.end(), pos) -
                                     bounds.begin()) - 1;
    out[std::min(dst, p - 1)].push_back(Item{pos, local_keys[i], std::move(values[order[i]])});
  }
  auto in = exchange(std::move(out));

  std::vector<Item> mine;
  for (auto& run : in) {
    for (auto& item : run) mine.push_back(std::move(item));
  }
  std::sort(mine.begin(), mine.end(),
            [](const Item& a, const Item& b) { return a.position < b.position; });
  SortedRun<K, V> result;
  result.keys.reserve(mine.size());
  result.values.reserve(mine.size());
  for (auto& item : mine) {
    result.keys.push_back(item.key);
    result.values.push_back(std::move(item.value));
  }
  return result;
}

}  // namespace stiv::comm
