#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "etree/oblivious.hpp"

using namespace etree::obl;

namespace {

std::size_t count_kind(const std::vector<TraceEvent>& t, OpKind k) {
  return static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [&](const TraceEvent& e) { return e.op_kind == k; }));
}

}  // namespace

TEST(Primitives, GreaterIsStrict) {
  EXPECT_EQ(ogreater(word{3}, word{2}), 1u);
  EXPECT_EQ(ogreater(word{2}, word{3}), 0u);
  EXPECT_EQ(ogreater(word{5}, word{5}), 0u);
  EXPECT_EQ(ogreater(~word{0}, word{0}), 1u);
  EXPECT_EQ(ogreater(word{0}, ~word{0}), 0u);
}

TEST(Primitives, GreaterOnDoublesFollowsNumericOrder) {
  EXPECT_EQ(ogreater(1.5, 1.25), 1u);
  EXPECT_EQ(ogreater(-1.0, 0.0), 0u);
  EXPECT_EQ(ogreater(0.0, -1.0), 1u);
  EXPECT_EQ(ogreater(-0.5, -2.0), 1u);
  EXPECT_EQ(ogreater(2.0, 2.0), 0u);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double a = d(rng), b = d(rng);
    ASSERT_EQ(ogreater(a, b), a > b ? 1u : 0u) << a << " " << b;
  }
}

TEST(Primitives, EqualMatchesOperator) {
  EXPECT_EQ(oequal(word{4}, word{4}), 1u);
  EXPECT_EQ(oequal(word{4}, word{5}), 0u);
  EXPECT_EQ(oequal(word{0}, word{0}), 1u);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10000; ++i) {
    const word a = rng() & 7, b = rng() & 7;
    ASSERT_EQ(oequal(a, b), a == b ? 1u : 0u);
    ASSERT_EQ(ogreater(a, b), a > b ? 1u : 0u);
  }
}

TEST(Primitives, SelectPicksByCondition) {
  EXPECT_EQ(oselect(1, word{7}, word{9}), 7u);
  EXPECT_EQ(oselect(0, word{7}, word{9}), 9u);
  EXPECT_EQ(oselect(1, word{7}, word{7}), 7u);
  EXPECT_EQ(oselect(1, 2.5, -1.0), 2.5);
  EXPECT_EQ(oselect(0, 2.5, -1.0), -1.0);
}

TEST(Primitives, SelectIsAffineInCondition) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    const word c = rng() & 1, a = rng(), b = rng();
    ASSERT_EQ(oselect(c, a, b), c * a + (1 - c) * b);
  }
}

TEST(Primitives, AssignWritesOnlyWhenSet) {
  word dest = 3;
  oassign(1, dest, word{8});
  EXPECT_EQ(dest, 8u);
  oassign(0, dest, word{1});
  EXPECT_EQ(dest, 8u);
  oassign(1, dest, dest);
  EXPECT_EQ(dest, 8u);
}

TEST(Primitives, AssignEmitsTheSameEventForEitherCondition) {
  word a = 0, b = 0;
  const auto t1 = trace_of([&] { oassign(1, a, word{5}); });
  const auto t0 = trace_of([&] { oassign(0, b, word{5}); });
  EXPECT_EQ(t1, t0);
  ASSERT_EQ(t1.size(), 1u);
  EXPECT_EQ(t1[0].op_kind, OpKind::assign);
}

TEST(Access, ReadsTheIndexedElement) {
  const std::vector<word> arr{10, 20, 30};
  EXPECT_EQ(oaccess(arr, 1), 20u);
  EXPECT_EQ(oaccess(std::vector<word>{42}, 0), 42u);
  EXPECT_EQ(oaccess(arr, 2), 30u);
}

TEST(Access, TouchesEveryElementRegardlessOfIndex) {
  const std::vector<word> arr{1, 2, 3, 4, 5};
  std::vector<TraceEvent> first;
  for (std::size_t idx = 0; idx < arr.size(); ++idx) {
    const auto t = trace_of([&] { (void)oaccess(arr, idx); });
    EXPECT_EQ(count_kind(t, OpKind::access), 1u);
    EXPECT_EQ(count_kind(t, OpKind::select), arr.size());
    EXPECT_EQ(t.front().operand_shape, Shape({5}));
    if (idx == 0) first = t;
    EXPECT_EQ(t, first);
  }
}

TEST(Access, OutOfRangeIndexIsAnError) {
  const std::vector<word> arr{1, 2, 3};
  EXPECT_THROW((void)oaccess(arr, 3), std::out_of_range);
  std::vector<word> w(3);
  EXPECT_THROW(owrite(w, 7, word{1}), std::out_of_range);
}

TEST(Access, WriteUpdatesOnlyTheTarget) {
  for (std::size_t idx : {std::size_t{0}, std::size_t{2}, std::size_t{4}}) {
    std::vector<word> arr{1, 2, 3, 4, 5};
    const auto t = trace_of([&] { owrite(arr, idx, word{99}); });
    for (std::size_t i = 0; i < arr.size(); ++i) EXPECT_EQ(arr[i], i == idx ? 99u : i + 1);
    EXPECT_EQ(count_kind(t, OpKind::access), 1u);
    EXPECT_EQ(count_kind(t, OpKind::assign), arr.size());
  }
}

TEST(Access, LineVariantsRoundTrip) {
  std::vector<word> data(4 * 3);
  std::iota(data.begin(), data.end(), 0);
  std::vector<word> line(3);
  oaccess_line(data, 3, 2, line);
  EXPECT_EQ(line, (std::vector<word>{6, 7, 8}));
  const std::vector<word> repl{100, 101, 102};
  owrite_line(data, 3, 1, repl);
  EXPECT_EQ(data[3], 100u);
  EXPECT_EQ(data[5], 102u);
  EXPECT_EQ(data[6], 6u);
  const auto a = trace_of([&] { oaccess_line(data, 3, 0, line); });
  const auto b = trace_of([&] { oaccess_line(data, 3, 3, line); });
  EXPECT_EQ(a, b);
  EXPECT_EQ(count_kind(a, OpKind::select), 4u);
}

TEST(Trace, PureArithmeticEmitsNothing) {
  const auto t = trace_of([] {
    volatile word x = 3;
    x = x * 7 + 1;
  });
  EXPECT_TRUE(t.empty());
}

TEST(Trace, NoRecorderMeansNoEvents) {
  EXPECT_FALSE(tracing());
  (void)ogreater(word{1}, word{2});
  TraceRecorder rec;
  {
    TraceScope scope(rec);
    EXPECT_TRUE(tracing());
  }
  EXPECT_TRUE(rec.events().empty());
}

TEST(Trace, DumpFormatIsSeqKindShape) {
  const std::vector<word> arr{1, 2};
  const auto t = trace_of([&] {
    (void)oaccess(arr, 0);
    (void)oequal(word{1}, word{1});
  });
  EXPECT_EQ(dump(t), "0,access,2\n1,select,1\n2,select,1\n3,equal,1\n");
}

TEST(Trace, IdenticalForRandomSameShapeArguments) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<word> a(16), b(16);
    for (auto& v : a) v = rng();
    for (auto& v : b) v = rng();
    auto run = [&](std::vector<word>& arr) {
      return trace_of([&] {
        const word x = oaccess(arr, arr[0] % 16);
        const word g = ogreater(x, arr[1]);
        const word e = oequal(x, arr[2]);
        word cell = arr[3];
        oassign(g & e, cell, x);
        owrite(arr, arr[4] % 16, oselect(g, x, cell));
        (void)ogreater(static_cast<double>(arr[5]), static_cast<double>(arr[6]));
      });
    };
    ASSERT_EQ(run(a), run(b));
  }
}

TEST(Timing, AccessShowsNoDependenceOnTheSecretIndex) {
  // Welch's t-test between fixed-index and random-index timings, |t| < 4.5.
  constexpr std::size_t n = 256, reps = 4000;
  std::vector<word> arr(n, 1);
  std::mt19937_64 rng(23);
  std::vector<double> fixed, random;
  volatile word sink = 0;
  auto time_one = [&](std::size_t idx) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int k = 0; k < 8; ++k) sink = sink + oaccess(arr, idx);
    return std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count();
  };
  for (std::size_t r = 0; r < reps; ++r) {
    if (rng() & 1)
      fixed.push_back(time_one(0));
    else
      random.push_back(time_one(rng() % n));
  }
  auto trimmed = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.resize(v.size() * 9 / 10);
    return v;
  };
  fixed = trimmed(fixed);
  random = trimmed(random);
  auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto var = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
  };
  const double t = (mean(fixed) - mean(random)) /
                   std::sqrt(var(fixed) / fixed.size() + var(random) / random.size());
  EXPECT_LT(std::abs(t), 4.5) << "fixed " << mean(fixed) << "ns vs random " << mean(random) << "ns";
}
