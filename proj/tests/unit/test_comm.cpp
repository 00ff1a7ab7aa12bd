#include <doctest.h>

#include <mutex>
#include <random>
#include <stdexcept>

#include "stiv/comm.hpp"

using namespace stiv;

TEST_CASE("scan_exclusive gives prefix sums") {
  comm::run_ranks(1, [](comm::Communicator& c) { CHECK(c.scan_exclusive(5) == 0); });

  std::vector<std::int64_t> got(2);
  comm::run_ranks(2, [&](comm::Communicator& c) {
    const std::int64_t counts[] = {2, 3};
    got[c.rank()] = c.scan_exclusive(counts[c.rank()]);
  });
  CHECK(got == std::vector<std::int64_t>{0, 2});

  got.assign(4, -1);
  comm::run_ranks(4, [&](comm::Communicator& c) {
    const std::int64_t counts[] = {1, 0, 4, 2};
    got[c.rank()] = c.scan_exclusive(counts[c.rank()]);
  });
  CHECK(got == std::vector<std::int64_t>{0, 1, 1, 5});
}

TEST_CASE("sort_by_key on one rank permutes values with keys") {
  comm::run_ranks(1, [](comm::Communicator& c) {
    const auto r = c.sort_by_key<int, char>({3, 1, 2}, {'c', 'a', 'b'});
    CHECK(r.keys == std::vector<int>{1, 2, 3});
    CHECK(r.values == std::vector<char>{'a', 'b', 'c'});
  });
}

TEST_CASE("sort_by_key keeps equal keys on one rank") {
  std::vector<std::vector<int>> keys(2);
  comm::run_ranks(2, [&](comm::Communicator& c) {
    std::vector<int> k = c.rank() == 0 ? std::vector<int>{3, 1} : std::vector<int>{2, 1};
    const auto r = c.sort_by_key<int, int>(k, k);
    keys[c.rank()] = r.keys;
  });
  std::vector<int> all = keys[0];
  all.insert(all.end(), keys[1].begin(), keys[1].end());
  CHECK(all == std::vector<int>{1, 1, 2, 3});
  const int ones0 = static_cast<int>(std::count(keys[0].begin(), keys[0].end(), 1));
  const int ones1 = static_cast<int>(std::count(keys[1].begin(), keys[1].end(), 1));
  CHECK((ones0 == 2 || ones1 == 2));
}

TEST_CASE("sort_by_key on empty input") {
  comm::run_ranks(3, [](comm::Communicator& c) {
    const auto r = c.sort_by_key<int, int>({}, {});
    CHECK(r.keys.empty());
    CHECK(r.values.empty());
  });
}

TEST_CASE("sort_by_key matches a serial stable sort for random input") {
  std::mt19937_64 rng(11);
  for (int ranks : {1, 2, 3, 5}) {
    std::vector<std::vector<int>> keys(ranks), vals(ranks);
    std::vector<std::pair<int, int>> serial;
    int next = 0;
    for (int r = 0; r < ranks; ++r) {
      const int n = static_cast<int>(rng() % 20);
      for (int i = 0; i < n; ++i) {
        keys[r].push_back(static_cast<int>(rng() % 7));
        vals[r].push_back(next++);
        serial.push_back({keys[r].back(), vals[r].back()});
      }
    }
    std::stable_sort(serial.begin(), serial.end(), [](auto& a, auto& b) { return a.first < b.first; });
    std::vector<std::vector<std::pair<int, int>>> out(ranks);
    comm::run_ranks(ranks, [&](comm::Communicator& c) {
      const auto r = c.sort_by_key<int, int>(keys[c.rank()], vals[c.rank()]);
      for (std::size_t i = 0; i < r.keys.size(); ++i) out[c.rank()].push_back({r.keys[i], r.values[i]});
    });
    std::vector<std::pair<int, int>> joined;
    for (auto& o : out) joined.insert(joined.end(), o.begin(), o.end());
    CHECK(joined == serial);
  }
}

TEST_CASE("sparse_all_to_all delivers by source") {
  comm::run_ranks(1, [](comm::Communicator& c) {
    const auto in = c.sparse_all_to_all<char>({{0, {'a', 'b'}}});
    REQUIRE(in.size() == 2);
    CHECK(in[0].payload == 'a');
    CHECK(in[1].payload == 'b');
  });

  std::vector<std::vector<char>> got(2);
  comm::run_ranks(2, [&](comm::Communicator& c) {
    const auto in = c.sparse_all_to_all<char>({{1 - c.rank(), {c.rank() == 0 ? 'x' : 'y'}}});
    for (const auto& e : in) got[c.rank()].push_back(e.payload);
  });
  CHECK(got[0] == std::vector<char>{'y'});
  CHECK(got[1] == std::vector<char>{'x'});

  std::vector<std::size_t> sizes(3);
  comm::run_ranks(3, [&](comm::Communicator& c) {
    std::map<int, std::vector<char>> out;
    if (c.rank() == 2) out[0] = {'z'};
    const auto in = c.sparse_all_to_all(out);
    sizes[c.rank()] = in.size();
    if (c.rank() == 0) {
      REQUIRE(in.size() == 1);
      CHECK(in[0].source == 2);
      CHECK(in[0].payload == 'z');
    }
  });
  CHECK(sizes == std::vector<std::size_t>{1, 0, 0});
}

TEST_CASE("invalid destination raises on every rank") {
  CHECK_THROWS_AS(comm::run_ranks(2,
                                  [](comm::Communicator& c) {
                                    std::map<int, std::vector<int>> out;
                                    if (c.rank() == 0) out[5] = {1};
                                    c.sparse_all_to_all(out);
                                  }),
                  comm::CommError);
}

TEST_CASE("a failing rank does not deadlock its peers") {
  CHECK_THROWS_AS(comm::run_ranks(3,
                                  [](comm::Communicator& c) {
                                    if (c.rank() == 1) throw std::runtime_error("boom");
                                    c.barrier();
                                  }),
                  std::runtime_error);
}

TEST_CASE("block_range partitions the items") {
  for (int size : {1, 2, 3, 7}) {
    std::int64_t expect = 0;
    for (int r = 0; r < size; ++r) {
      const auto [lo, hi] = comm::block_range(10, r, size);
      CHECK(lo == expect);
      CHECK(hi >= lo);
      expect = hi;
    }
    CHECK(expect == 10);
  }
}

TEST_CASE("allgatherv concatenates in rank order") {
  comm::run_ranks(3, [](comm::Communicator& c) {
    std::vector<int> mine(static_cast<std::size_t>(c.rank()), c.rank());
    CHECK(c.allgatherv(mine) == std::vector<int>{1, 2, 2});
  });
}
