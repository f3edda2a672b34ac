#include <cmath>
#include <limits>

#include "doctest.h"
#include "gs4dcc/error.hpp"
#include "gs4dcc/rng.hpp"
#include "gs4dcc/vq.hpp"

using namespace gs4dcc;

TEST_CASE("kmeans: {0, 0, 10, 10} with K=2 finds {0, 10}") {
  Matrix x(4, 1, std::vector<double>{0, 0, 10, 10});
  KMeansResult r = kmeans_fit(x, 2, 1);
  std::vector<double> c{r.centroids(0, 0), r.centroids(1, 0)};
  std::sort(c.begin(), c.end());
  CHECK(c == std::vector<double>{0.0, 10.0});
  CHECK(r.objective.back() == 0.0);
}

TEST_CASE("kmeans: K=1 gives the mean") {
  Rng rng(31);
  Matrix x(50, 3);
  for (double& v : x.data()) v = rng.normal();
  KMeansResult r = kmeans_fit(x, 1, 2);
  for (size_t d = 0; d < 3; ++d) {
    double m = 0;
    for (size_t i = 0; i < 50; ++i) m += x(i, d);
    CHECK(r.centroids(0, d) == doctest::Approx(m / 50).epsilon(1e-12));
  }
}

TEST_CASE("kmeans: N=6 instances against exhaustive assignments") {
  Rng rng(32);
  for (int inst = 0; inst < 10; ++inst) {
    Matrix x(6, 2);
    for (double& v : x.data()) v = rng.normal() * 3;
    KMeansResult r = kmeans_fit(x, 2, 100 + inst);
    // best over all 2^6 labelings, centroids = cluster means
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < 64; ++mask) {
      double cx[2][2] = {{0, 0}, {0, 0}};
      int cnt[2] = {0, 0};
      for (int i = 0; i < 6; ++i) {
        int c = (mask >> i) & 1;
        cx[c][0] += x(i, 0), cx[c][1] += x(i, 1), ++cnt[c];
      }
      if (!cnt[0] || !cnt[1]) continue;
      double obj = 0;
      for (int i = 0; i < 6; ++i) {
        int c = (mask >> i) & 1;
        for (int d = 0; d < 2; ++d) {
          double e = x(i, d) - cx[c][d] / cnt[c];
          obj += e * e;
        }
      }
      best = std::min(best, obj);
    }
    CHECK(r.objective.back() >= best - 1e-9);
    CHECK(r.objective.back() == doctest::Approx(kmeans_objective(x, r.centroids, r.indices)));
    for (size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-9);
  }
}

TEST_CASE("kmeans: assignment ties go to the lowest index") {
  Matrix x(1, 1, 5.0);
  Matrix c(2, 1, std::vector<double>{4.0, 6.0});
  CHECK(assign_nearest(x, c) == std::vector<uint32_t>{0});
  CHECK_THROWS_AS(kmeans_fit(x, 2, 1), Error);
}

TEST_CASE("rle: [5,5,5,2] codes as (5,3),(2,1)") {
  Bytes b = rle_encode(std::vector<uint32_t>{5, 5, 5, 2});
  CHECK(b == Bytes{static_cast<uint8_t>(RleMode::kRuns), 5, 3, 2, 1});
  CHECK(rle_decode(b, 4) == std::vector<uint32_t>{5, 5, 5, 2});
}

TEST_CASE("rle: empty input is the mode byte alone") {
  Bytes b = rle_encode(std::vector<uint32_t>{});
  CHECK(b.size() == 1);
  CHECK(rle_decode(b, 0).empty());
}

TEST_CASE("rle: random indices round-trip and pick RAW when runs are short") {
  Rng rng(33);
  std::vector<uint32_t> idx(10000);
  for (uint32_t& v : idx) v = static_cast<uint32_t>(rng.below(4096));
  Bytes b = rle_encode(idx);
  CHECK(b[0] == static_cast<uint8_t>(RleMode::kRaw));
  CHECK(rle_decode(b, idx.size()) == idx);

  // long runs flip it to run mode
  std::vector<uint32_t> runs;
  for (uint32_t v = 0; v < 100; ++v) runs.insert(runs.end(), 5, v * 37);
  Bytes rb = rle_encode(runs);
  CHECK(rb[0] == static_cast<uint8_t>(RleMode::kRuns));
  CHECK(rle_decode(rb, runs.size()) == runs);
  // size of each mode by direct count
  size_t raw = 1, run = 1;
  for (uint32_t v : runs) raw += v < 128 ? 1 : 2;
  for (uint32_t v = 0; v < 100; ++v) run += (v * 37 < 128 ? 1 : 2) + 1;
  CHECK(rb.size() == std::min(raw, run));
}

TEST_CASE("rle: malformed streams are rejected") {
  CHECK_THROWS_AS(rle_decode(Bytes{1, 5, 0}, 0), Error);         // zero run
  CHECK_THROWS_AS(rle_decode(Bytes{1, 5, 3}, 2), Error);         // overflowing run
  CHECK_THROWS_AS(rle_decode(Bytes{1, 5}, 1), Error);            // truncated
  CHECK_THROWS_AS(rle_decode(Bytes{7, 1}, 1), Error);            // unknown mode
  CHECK_THROWS_AS(rle_decode(Bytes{0, 1, 2}, 1), Error);         // trailing bytes
}
