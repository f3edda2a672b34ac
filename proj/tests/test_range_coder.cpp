#include <cmath>

#include "doctest.h"
#include "gs4dcc/entropy.hpp"
#include "gs4dcc/error.hpp"
#include "gs4dcc/range_coder.hpp"
#include "gs4dcc/rng.hpp"

using namespace gs4dcc;

namespace {

IntegerCdf random_cdf(size_t alphabet, Rng& rng) {
  std::vector<double> pmf(alphabet);
  for (double& p : pmf) p = std::pow(rng.uniform(), 4.0);
  return freeze_cdf(pmf);
}

}  // namespace

TEST_CASE("range coder: 1000 uniform 8-ary symbols cost 3000 bits plus slack") {
  Rng rng(41);
  IntegerCdf cdf = uniform_cdf(8);
  std::vector<uint32_t> s(1000);
  for (uint32_t& v : s) v = static_cast<uint32_t>(rng.below(8));
  auto provider = [&](size_t) -> const IntegerCdf& { return cdf; };
  Bytes b = encode_symbols(s, provider);
  CHECK(b.size() >= 375);
  CHECK(b.size() <= 375 + 8);
  CHECK(decode_symbols(b, provider, s.size()) == s);
}

TEST_CASE("range coder: certain symbols and empty streams cost only the flush") {
  IntegerCdf one;
  one.cumulative = {0, 1u << 16};
  one.validate();
  auto provider = [&](size_t) -> const IntegerCdf& { return one; };
  for (size_t n : {0, 1, 1000, 100000}) {
    std::vector<uint32_t> s(n, 0);
    Bytes b = encode_symbols(s, provider);
    CHECK(b.size() <= 4);
    CHECK(decode_symbols(b, provider, n) == s);
  }
}

TEST_CASE("range coder: 1e5 symbols under per-step random CDFs round-trip") {
  Rng rng(42);
  std::vector<IntegerCdf> cdfs;
  for (int i = 0; i < 64; ++i) cdfs.push_back(random_cdf(2 + rng.below(300), rng));
  std::vector<uint32_t> s(100000);
  std::vector<size_t> which(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    which[i] = rng.below(cdfs.size());
    s[i] = static_cast<uint32_t>(rng.below(cdfs[which[i]].alphabet()));
  }
  auto provider = [&](size_t i) -> const IntegerCdf& { return cdfs[which[i]]; };
  Bytes b = encode_symbols(s, provider);
  CHECK(decode_symbols(b, provider, s.size()) == s);
}

TEST_CASE("range coder: minimum-mass symbols of a skewed CDF") {
  std::vector<double> pmf(256, 0.0);
  pmf[17] = 1.0;
  IntegerCdf cdf = freeze_cdf(pmf);
  CHECK(cdf.mass(0) == 1);
  CHECK(cdf.mass(17) == 65536 - 255);
  Rng rng(43);
  std::vector<uint32_t> s(5000);
  for (uint32_t& v : s) v = rng.uniform() < 0.5 ? 17 : static_cast<uint32_t>(rng.below(256));
  auto provider = [&](size_t) -> const IntegerCdf& { return cdf; };
  Bytes b = encode_symbols(s, provider);
  CHECK(decode_symbols(b, provider, s.size()) == s);
}

TEST_CASE("range coder: asking for too many symbols fails cleanly") {
  Rng rng(44);
  IntegerCdf cdf = uniform_cdf(256);
  std::vector<uint32_t> s(100);
  for (uint32_t& v : s) v = static_cast<uint32_t>(rng.below(256));
  auto provider = [&](size_t) -> const IntegerCdf& { return cdf; };
  Bytes b = encode_symbols(s, provider);
  CHECK_THROWS_AS(decode_symbols(b, provider, 200), Error);
  // fewer symbols: a prefix, no fault
  auto prefix = decode_symbols(b, provider, 50);
  CHECK(std::equal(prefix.begin(), prefix.end(), s.begin()));
}

TEST_CASE("range coder: stream length tracks ideal bits within 0.1% + 64 bytes") {
  Rng rng(45);
  const size_t n = 20000;
  // uniform, skewed and per-step varying
  IntegerCdf uni = uniform_cdf(256);
  std::vector<double> skew(64);
  for (size_t i = 0; i < skew.size(); ++i) skew[i] = std::pow(0.6, double(i));
  IntegerCdf sk = freeze_cdf(skew);
  std::vector<IntegerCdf> var;
  for (int i = 0; i < 32; ++i) {
    IntegerCdf c;
    dg_cdf(rng.uniform(-5, 5), 0.2 + 5 * rng.uniform(), Support{-20, 20}, c);
    var.push_back(c);
  }
  for (int kind = 0; kind < 3; ++kind) {
    std::vector<uint32_t> s(n);
    std::vector<size_t> which(n);
    for (size_t i = 0; i < n; ++i) {
      which[i] = rng.below(var.size());
      const IntegerCdf& c = kind == 0 ? uni : kind == 1 ? sk : var[which[i]];
      // sample from the CDF itself
      const uint32_t u = static_cast<uint32_t>(rng.below(c.total()));
      uint32_t k = 0;
      while (c.cumulative[k + 1] <= u) ++k;
      s[i] = k;
    }
    auto provider = [&](size_t i) -> const IntegerCdf& { return kind == 0 ? uni : kind == 1 ? sk : var[which[i]]; };
    const double ideal = ideal_bits(s, provider) / 8.0;
    const Bytes b = encode_symbols(s, provider);
    CHECK(std::abs(double(b.size()) - ideal) <= 0.001 * ideal + 64);
  }
}

TEST_CASE("integer CDF validation") {
  IntegerCdf bad;
  bad.cumulative = {0, 100, 50, 65536};
  CHECK_THROWS_AS(bad.validate(), Error);
  IntegerCdf zero;
  zero.cumulative = {0, 0, 65536};
  CHECK_THROWS_AS(zero.validate(), Error);
  CHECK_NOTHROW(uniform_cdf(3).validate());
  CHECK(uniform_cdf(3).mass(0) == 21846);
}
