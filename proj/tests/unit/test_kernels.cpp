#include <doctest.h>

#include <atomic>

#include "wmforge/kernels.hpp"
#include "wmforge/rng.hpp"

using namespace wmforge;

TEST_SUITE("kernels") {
  TEST_CASE("parallel_for visits every index once") {
    for (const int t : {1, 2, 4}) {
      std::vector<std::atomic<int>> hits(1001);
      parallel_for(hits.size(), t, [&](std::size_t i) { hits[i]++; });
      for (const auto& h : hits) CHECK(h.load() == 1);
    }
    parallel_for(0, 2, [](std::size_t) { FAIL("no work expected"); });
  }

  TEST_CASE("serial and parallel kernels agree") {
    Rng rng(1);
    Matrix emb(120, 6);
    for (auto& v : emb.data) v = rng.normal();
    CHECK(kernels::cosine_topk_serial(emb, 7) == kernels::cosine_topk_parallel(emb, 7, 3));

    std::vector<SparseCounts> sents(300);
    ColorCode color(50, 0);
    for (std::size_t j = 0; j < 50; j += 3) color[j] = 1;
    for (auto& s : sents) {
      for (TokenId j = 0; j < 50; ++j)
        if (rng.uniform() < 0.3) s.push_back({j, static_cast<std::int32_t>(1 + rng.below(4))});
    }
    CHECK(kernels::green_counts_serial(sents, color) == kernels::green_counts_parallel(sents, color, 3));

    Matrix a(40, 60);
    for (auto& v : a.data) v = rng.normal();
    a(7, 11) = 2.5;
    Matrix b = a;
    std::vector<double> oa(60), ob;
    for (auto& v : oa) v = rng.normal();
    ob = oa;
    kernels::pivot_serial(a, oa, 7, 11);
    kernels::pivot_parallel(b, ob, 7, 11, 3);
    CHECK(a == b);
    CHECK(oa == ob);
    CHECK(a(7, 11) == doctest::Approx(1.0));
    for (std::size_t i = 0; i < 40; ++i)
      if (i != 7) CHECK(a(i, 11) == doctest::Approx(0.0));
  }
}
