#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "gradcheck.hpp"
#include "test_util.hpp"
#include "wtal/distill.hpp"
#include "wtal/errors.hpp"
#include "wtal/rng.hpp"

using namespace wtal;

namespace {

Cas make_cas(int t, int c, std::vector<double> values) {
  Cas cas;
  cas.branch = Branch::Cbp;
  cas.t = t;
  cas.c = c;
  cas.values = std::move(values);
  return cas;
}

Cas random_cas(Rng& rng, int t, int c) {
  Cas cas;
  cas.branch = Branch::Cbp;
  cas.t = t;
  cas.c = c;
  cas.values.resize(static_cast<std::size_t>(t) * c);
  for (auto& v : cas.values) v = rng.uniform();
  return cas;
}

std::vector<int> random_labels(Rng& rng, int c) {
  std::vector<int> y(c, 0);
  for (auto& v : y) v = rng.uniform() < 0.5 ? 1 : 0;
  if (std::count(y.begin(), y.end(), 1) == 0) y[rng.uniform_int(0, c - 1)] = 1;
  return y;
}

// Independent per-entry restatement of the ternary rule.
int oracle_entry(double p, int y, double dh, double dl) {
  if (y == 0) return 0;
  if (p > dh) return 1;
  if (p < dl) return 0;
  return -1;
}

// Direct double-loop InfoNCE, no shared code with the implementation.
double oracle_fb(const std::vector<std::vector<double>>& emb,
                 const ContrastSets& sets, double tau) {
  auto norm_row = [&](const std::vector<double>& r) {
    double n2 = 1e-12;
    for (double v : r) n2 += v * v;
    const double inv = 1.0 / std::sqrt(n2);
    std::vector<double> out(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) out[i] = r[i] * inv;
    return out;
  };
  std::vector<std::vector<double>> f;
  for (const auto& r : emb) f.push_back(norm_row(r));
  auto sim = [&](int a, int b) {
    double d = 0.0;
    for (std::size_t i = 0; i < f[a].size(); ++i) d += f[a][i] * f[b][i];
    return std::exp(d / tau);
  };
  double total = 0.0;
  int used = 0;
  for (std::size_t a = 0; a < sets.anchors.size(); ++a) {
    if (sets.positives[a].empty() || sets.negatives.empty()) continue;
    const int i = sets.anchors[a];
    double pos = 0.0, den = 0.0;
    for (int m : sets.positives[a]) pos += sim(i, m);
    den = pos;
    for (int j : sets.negatives) den += sim(i, j);
    total += -std::log(pos / den);
    ++used;
  }
  return used == 0 ? 0.0 : total / used;
}

}  // namespace

TEST_CASE("ternary thresholds follow the double-threshold rule") {
  const Cas cas = make_cas(3, 1, {0.5, 0.2, 0.05});
  const auto grid = make_pseudo_labels(cas, {1}, 0.3, 0.1);
  CHECK(grid.at(0, 0) == 1);
  CHECK(grid.at(1, 0) == -1);
  CHECK(grid.at(2, 0) == 0);

  // Scores sitting exactly on the high threshold stay uncertain.
  const Cas edge = make_cas(2, 1, {0.3, 0.3});
  const auto eg = make_pseudo_labels(edge, {1}, 0.3, 0.1);
  CHECK(eg.at(0, 0) == -1);
  CHECK(eg.at(1, 0) == -1);

  // Absent classes are background everywhere, whatever the scores say.
  const Cas two = make_cas(2, 2, {0.9, 0.9, 0.9, 0.9});
  const auto tg = make_pseudo_labels(two, {1, 0}, 0.3, 0.1);
  CHECK(tg.at(0, 0) == 1);
  CHECK(tg.at(0, 1) == 0);
  CHECK(tg.at(1, 1) == 0);

  CHECK_THROWS_AS(make_pseudo_labels(cas, {1}, 0.1, 0.3), ParameterError);
  CHECK_THROWS_AS(make_pseudo_labels(cas, {1}, 0.1, 0.1), ParameterError);
  CHECK_THROWS_AS(make_pseudo_labels(cas, {1, 0}, 0.3, 0.1), DimensionError);
}

TEST_CASE("ternary grids match a per-entry oracle on random instances") {
  Rng rng(31);
  for (int trial = 0; trial < 300; ++trial) {
    const int t = rng.uniform_int(1, 12);
    const int c = rng.uniform_int(1, 6);
    const Cas cas = random_cas(rng, t, c);
    const auto y = random_labels(rng, c);
    const double dl = rng.uniform(0.05, 0.4);
    const double dh = dl + rng.uniform(0.05, 0.4);
    const auto grid = make_pseudo_labels(cas, y, dh, dl);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < c; ++j)
        CHECK(grid.at(i, j) == oracle_entry(cas.at(i, j), y[j], dh, dl));
  }
}

TEST_CASE("raising the low threshold never creates foreground") {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const Cas cas = random_cas(rng, 8, 3);
    const auto y = random_labels(rng, 3);
    const auto base = make_pseudo_labels(cas, y, 0.6, 0.1);
    const auto moved = make_pseudo_labels(cas, y, 0.6, 0.3);
    for (std::size_t i = 0; i < base.values.size(); ++i) {
      if (base.values[i] == 0) CHECK(moved.values[i] == 0);
      if (base.values[i] != 1) CHECK(moved.values[i] != 1);
      if (base.values[i] == 1) CHECK(moved.values[i] == 1);
    }
  }
}

TEST_CASE("masked distillation loss evaluates hand examples") {
  ad::Graph g(false);

  // Student equals teacher on confident entries: essentially zero.
  const Cas cas = make_cas(2, 1, {1.0, 0.0});
  PseudoLabelGrid grid = make_pseudo_labels(cas, {1}, 0.6, 0.4);
  REQUIRE(grid.at(0, 0) == 1);
  REQUIRE(grid.at(1, 0) == 0);
  auto zero = loss_kd(g, grid, ad::make_constant({2, 1}, {1.0, 0.0}));
  CHECK(!zero.degenerate);
  CHECK(zero.value->scalar() == doctest::Approx(0.0).epsilon(1e-6));

  // One confident foreground entry at p=0.5 costs exactly ln 2: make the
  // second row uncertain so only that entry counts.
  const Cas one = make_cas(2, 1, {0.9, 0.5});
  auto og = make_pseudo_labels(one, {1}, 0.6, 0.4);
  REQUIRE(og.at(0, 0) == 1);
  REQUIRE(og.at(1, 0) == -1);
  auto l = loss_kd(g, og, ad::make_constant({2, 1}, {0.5, 0.123}));
  CHECK(l.value->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  // Mixed example against direct arithmetic: h = [1, 0], p = [0.8, 0.3],
  // mean of -log(0.8) and -log(0.7).
  auto mg = make_pseudo_labels(make_cas(2, 1, {0.9, 0.1}), {1}, 0.6, 0.4);
  auto m = loss_kd(g, mg, ad::make_constant({2, 1}, {0.8, 0.3}));
  CHECK(m.value->scalar() ==
        doctest::Approx((-std::log(0.8) - std::log(0.7)) / 2.0).epsilon(1e-12));

  // Shape mismatch.
  CHECK_THROWS_AS(loss_kd(g, mg, ad::make_constant({3, 1}, {0.1, 0.2, 0.3})),
                  DimensionError);
}

TEST_CASE("distillation loss with no confident entries degenerates to zero") {
  ad::Graph g(false);
  const Cas cas = make_cas(2, 2, {0.5, 0.5, 0.5, 0.5});
  const auto grid = make_pseudo_labels(cas, {1, 1}, 0.6, 0.4);
  for (int v : grid.values) CHECK(v == -1);
  auto l = loss_kd(g, grid, ad::make_constant({2, 2}, {0.1, 0.9, 0.2, 0.8}));
  CHECK(l.degenerate);
  CHECK(l.value->scalar() == 0.0);
}

TEST_CASE("uncertain entries carry no value and no gradient") {
  Rng rng(33);
  const Cas teacher = random_cas(rng, 6, 3);
  const auto y = std::vector<int>{1, 1, 1};
  const auto grid = make_pseudo_labels(teacher, y, 0.6, 0.3);
  bool has_uncertain = false, has_confident = false;
  for (int v : grid.values) {
    has_uncertain |= v == -1;
    has_confident |= v != -1;
  }
  REQUIRE(has_uncertain);
  REQUIRE(has_confident);

  auto student = testutil::rand_tensor(rng, {6, 3}, 0.05, 0.95, true);
  ad::Graph g(true);
  auto l = loss_kd(g, grid, student);
  g.backward(l.value);
  const double base = l.value->scalar();

  for (int t = 0; t < 6; ++t) {
    for (int c = 0; c < 3; ++c) {
      if (grid.at(t, c) != -1) continue;
      const std::size_t idx = static_cast<std::size_t>(t) * 3 + c;
      // Exactly zero gradient at uncertain coordinates.
      CHECK(student->grad[idx] == 0.0);
      // Perturbing them leaves the loss bit-identical.
      const double saved = student->data[idx];
      student->data[idx] = rng.uniform();
      ad::Graph g2(false);
      CHECK(std::abs(loss_kd(g2, grid, student).value->scalar() - base) <
            1e-12);
      student->data[idx] = saved;
    }
  }
}

TEST_CASE("confident gradient passes a finite-difference audit") {
  Rng rng(34);
  const Cas teacher = random_cas(rng, 5, 2);
  const auto grid = make_pseudo_labels(teacher, {1, 1}, 0.6, 0.3);
  auto student = testutil::rand_tensor(rng, {5, 2}, 0.1, 0.9, true);
  auto build = [&](ad::Graph& g) { return loss_kd(g, grid, student).value; };
  CHECK(gradcheck::max_rel_error(build, {student}) <= 1e-4);
}

TEST_CASE("contrast set construction on crafted grids") {
  // Frames: 0 fore class0, 1 fore class0, 2 background, 3 uncertain-only,
  // 4 fore class1.
  PseudoLabelGrid grid;
  grid.t = 5;
  grid.c = 2;
  grid.labels = {1, 1};
  grid.values = {1, 0,    //
                 1, -1,   //
                 0, 0,    //
                 -1, -1,  //
                 0, 1};
  const auto sets = build_contrast_sets(grid);
  REQUIRE(sets.anchors == std::vector<int>{0, 1, 4});
  CHECK(sets.positives[0] == std::vector<int>{1});
  CHECK(sets.positives[1] == std::vector<int>{0});
  CHECK(sets.positives[2].empty());  // frame 4 is the only class-1 frame
  CHECK(sets.negatives == std::vector<int>{2});

  // No foreground anywhere: no anchors.
  PseudoLabelGrid empty;
  empty.t = 2;
  empty.c = 1;
  empty.labels = {1};
  empty.values = {0, -1};
  const auto es = build_contrast_sets(empty);
  CHECK(es.anchors.empty());
  CHECK(es.negatives == std::vector<int>{0});
}

TEST_CASE("background frames require a confidently-off present class") {
  // The frame is foreground-free, but only the absent class is zero, so it
  // must not join the negative set.
  PseudoLabelGrid grid;
  grid.t = 1;
  grid.c = 2;
  grid.labels = {1, 0};
  grid.values = {-1, 0};
  const auto sets = build_contrast_sets(grid);
  CHECK(sets.negatives.empty());
}

TEST_CASE("contrast sets match a brute-force frame classifier") {
  Rng rng(35);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = rng.uniform_int(2, 10);
    const int c = rng.uniform_int(1, 4);
    PseudoLabelGrid grid;
    grid.t = t;
    grid.c = c;
    grid.labels = random_labels(rng, c);
    grid.values.resize(static_cast<std::size_t>(t) * c);
    for (int i = 0; i < t; ++i)
      for (int j = 0; j < c; ++j)
        grid.values[static_cast<std::size_t>(i) * c + j] =
            grid.labels[j] == 0 ? 0 : rng.uniform_int(-1, 1);

    const auto sets = build_contrast_sets(grid);

    // Oracle: classify each frame independently.
    std::vector<int> fore_frames, back_frames;
    for (int i = 0; i < t; ++i) {
      bool fore = false, zero_true = false;
      for (int j = 0; j < c; ++j) {
        if (grid.at(i, j) == 1) fore = true;
        if (grid.at(i, j) == 0 && grid.labels[j] == 1) zero_true = true;
      }
      if (fore) fore_frames.push_back(i);
      else if (zero_true) back_frames.push_back(i);
    }
    CHECK(sets.anchors == fore_frames);
    CHECK(sets.negatives == back_frames);

    // Disjointness and positive correctness.
    std::set<int> back_set(back_frames.begin(), back_frames.end());
    for (std::size_t a = 0; a < sets.anchors.size(); ++a) {
      const int i = sets.anchors[a];
      CHECK(back_set.count(i) == 0);
      for (int m : sets.positives[a]) {
        CHECK(m != i);
        bool shares = false;
        for (int j = 0; j < c; ++j)
          if (grid.at(i, j) == 1 && grid.at(m, j) == 1) shares = true;
        CHECK(shares);
      }
    }
  }
}

TEST_CASE("contrastive loss reproduces the symmetric two-frame value") {
  // Anchor 0, positive 1, negative 2, with f1 and f2 equally similar to f0.
  ContrastSets sets;
  sets.anchors = {0};
  sets.positives = {{1}};
  sets.negatives = {2};
  auto emb = ad::make_constant({3, 2}, {1.0, 0.0,   //
                                        0.0, 1.0,   //
                                        0.0, -1.0});  // both at cosine 0
  ad::Graph g(false);
  auto l = loss_fb(g, emb, sets, 0.07);
  CHECK(!l.degenerate);
  CHECK(l.value->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("perfect positives drive the contrastive loss to zero") {
  ContrastSets sets;
  sets.anchors = {0};
  sets.positives = {{1}};
  sets.negatives = {2};
  auto emb = ad::make_constant({3, 2}, {1.0, 0.0,    //
                                        1.0, 0.0,    //
                                        -1.0, 0.0});  // negative opposite
  ad::Graph g(false);
  auto l = loss_fb(g, emb, sets, 0.07);
  CHECK(l.value->scalar() < 1e-6);
  CHECK(l.value->scalar() >= 0.0);
}

TEST_CASE("contrastive loss matches a direct summation oracle") {
  Rng rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = 5;
    const int d = rng.uniform_int(2, 6);
    std::vector<std::vector<double>> emb(t, std::vector<double>(d));
    std::vector<double> flat;
    for (auto& row : emb)
      for (auto& v : row) {
        v = rng.uniform(-1.0, 1.0);
        flat.push_back(v);
      }
    // Random ternary grid over 2 classes induces the sets.
    PseudoLabelGrid grid;
    grid.t = t;
    grid.c = 2;
    grid.labels = {1, 1};
    grid.values.resize(t * 2);
    for (auto& v : grid.values) v = rng.uniform_int(-1, 1);
    const auto sets = build_contrast_sets(grid);

    ad::Graph g(false);
    auto got = loss_fb(g, ad::make_constant({t, d}, flat), sets, 0.07);
    const double want = oracle_fb(emb, sets, 0.07);
    if (got.degenerate) {
      CHECK(want == 0.0);
    } else {
      CHECK(got.value->scalar() == doctest::Approx(want).epsilon(1e-10));
    }
  }
}

TEST_CASE("contrastive loss ignores rigid rotations of the embedding space") {
  Rng rng(37);
  const int t = 6, d = 4;
  auto emb = testutil::rand_tensor(rng, {t, d}, -1.0, 1.0);
  ContrastSets sets;
  sets.anchors = {0, 1, 2};
  sets.positives = {{1, 2}, {0}, {0, 1}};
  sets.negatives = {3, 4, 5};

  // Random orthogonal matrix via Gram-Schmidt on a Gaussian draw.
  std::vector<std::vector<double>> q(d, std::vector<double>(d));
  for (auto& row : q)
    for (auto& v : row) v = rng.normal();
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < i; ++j) {
      double dot = 0.0;
      for (int k = 0; k < d; ++k) dot += q[i][k] * q[j][k];
      for (int k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
    }
    double n2 = 0.0;
    for (int k = 0; k < d; ++k) n2 += q[i][k] * q[i][k];
    for (int k = 0; k < d; ++k) q[i][k] /= std::sqrt(n2);
  }
  std::vector<double> rotated(static_cast<std::size_t>(t) * d, 0.0);
  for (int i = 0; i < t; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        rotated[static_cast<std::size_t>(i) * d + j] +=
            emb->data[static_cast<std::size_t>(i) * d + k] * q[k][j];

  ad::Graph g(false);
  const double base = loss_fb(g, emb, sets, 0.07).value->scalar();
  const double moved =
      loss_fb(g, ad::make_constant({t, d}, rotated), sets, 0.07).value->scalar();
  CHECK(base == doctest::Approx(moved).epsilon(1e-9));
}

TEST_CASE("anchors without counterparts are skipped or degenerate") {
  ad::Graph g(false);
  auto emb = ad::make_constant({3, 2}, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});

  // No negatives at all: degenerate zero.
  ContrastSets no_neg;
  no_neg.anchors = {0};
  no_neg.positives = {{1}};
  auto l1 = loss_fb(g, emb, no_neg, 0.07);
  CHECK(l1.degenerate);
  CHECK(l1.value->scalar() == 0.0);

  // One anchor lacks positives, the other is fine: only the second counts.
  ContrastSets mixed;
  mixed.anchors = {0, 1};
  mixed.positives = {{}, {0}};
  mixed.negatives = {2};
  auto l2 = loss_fb(g, emb, mixed, 0.07);
  CHECK(!l2.degenerate);
  ContrastSets only_second;
  only_second.anchors = {1};
  only_second.positives = {{0}};
  only_second.negatives = {2};
  auto l3 = loss_fb(g, emb, only_second, 0.07);
  CHECK(l2.value->scalar() == doctest::Approx(l3.value->scalar()).epsilon(1e-14));

  CHECK_THROWS_AS(loss_fb(g, emb, only_second, 0.0), ParameterError);
  ContrastSets bad;
  bad.anchors = {7};
  bad.positives = {{0}};
  bad.negatives = {2};
  CHECK_THROWS_AS(loss_fb(g, emb, bad, 0.07), DimensionError);
}

TEST_CASE("contrastive gradient passes a finite-difference audit") {
  Rng rng(38);
  auto emb = testutil::rand_tensor(rng, {6, 3}, -1.0, 1.0, true);
  ContrastSets sets;
  sets.anchors = {0, 1, 2};
  sets.positives = {{1, 2}, {0, 2}, {0, 1}};
  sets.negatives = {3, 4, 5};
  auto build = [&](ad::Graph& g) { return loss_fb(g, emb, sets, 0.07).value; };
  CHECK(gradcheck::max_rel_error(build, {emb}) <= 1e-4);
}

TEST_CASE("total loss combines the two terms linearly") {
  Rng rng(39);
  const Cas teacher = random_cas(rng, 6, 2);
  const auto grid = make_pseudo_labels(teacher, {1, 1}, 0.6, 0.3);
  const auto sets = build_contrast_sets(grid);
  auto cas = testutil::rand_tensor(rng, {6, 2}, 0.1, 0.9, true);
  auto emb = testutil::rand_tensor(rng, {6, 3}, -1.0, 1.0, true);

  ad::Graph g(false);
  const double kd = loss_kd(g, grid, cas).value->scalar();
  const double fb = loss_fb(g, emb, sets, 0.07).value->scalar();
  const double tot =
      loss_total(g, grid, cas, emb, sets, 0.05, 0.07).value->scalar();
  CHECK(tot == doctest::Approx(kd + 0.05 * fb).epsilon(1e-12));

  const double zero_lambda =
      loss_total(g, grid, cas, emb, sets, 0.0, 0.07).value->scalar();
  CHECK(zero_lambda == doctest::Approx(kd).epsilon(1e-14));

  // Gradient linearity: d(total) = d(kd) + lambda * d(fb).
  auto run = [&](auto builder, ad::TensorPtr wrt) {
    wrt->requires_grad = true;
    wrt->grad.assign(wrt->size(), 0.0);
    wrt->grad_live = false;
    ad::Graph gg(true);
    gg.backward(builder(gg));
    wrt->ensure_grad();
    return wrt->grad;
  };
  const auto g_kd =
      run([&](ad::Graph& gg) { return loss_kd(gg, grid, cas).value; }, cas);
  const auto g_tot = run(
      [&](ad::Graph& gg) {
        return loss_total(gg, grid, cas, emb, sets, 0.05, 0.07).value;
      },
      cas);
  for (std::size_t i = 0; i < g_kd.size(); ++i)
    CHECK(g_tot[i] == doctest::Approx(g_kd[i]).epsilon(1e-12));

  const auto g_fb =
      run([&](ad::Graph& gg) { return loss_fb(gg, emb, sets, 0.07).value; },
          emb);
  const auto g_tot_emb = run(
      [&](ad::Graph& gg) {
        return loss_total(gg, grid, cas, emb, sets, 0.05, 0.07).value;
      },
      emb);
  for (std::size_t i = 0; i < g_fb.size(); ++i)
    CHECK(g_tot_emb[i] == doctest::Approx(0.05 * g_fb[i]).epsilon(1e-10));
}

TEST_CASE("losses stay non-negative and finite on random inputs") {
  Rng rng(40);
  ad::Graph g(false);
  for (int trial = 0; trial < 100; ++trial) {
    const int t = rng.uniform_int(2, 8);
    const int c = rng.uniform_int(1, 4);
    const Cas teacher = random_cas(rng, t, c);
    const auto y = random_labels(rng, c);
    const auto grid = make_pseudo_labels(teacher, y, 0.55, 0.35);
    const auto sets = build_contrast_sets(grid);
    auto cas = testutil::rand_tensor(rng, {t, c}, 0.0, 1.0);
    auto emb = testutil::rand_tensor(rng, {t, 4}, -2.0, 2.0);
    const auto total = loss_total(g, grid, cas, emb, sets, 0.05, 0.07);
    CHECK(total.value->scalar() >= 0.0);
    CHECK(std::isfinite(total.value->scalar()));
  }
}
