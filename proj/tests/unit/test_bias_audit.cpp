#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "oracles.hpp"
#include "sprop/bias_audit.hpp"
#include "sprop/error.hpp"
#include "sprop/random.hpp"
#include "synthetic.hpp"

using namespace sprop;
using namespace sprop::audit;

namespace {

DesignMatrix with_intercept(const std::vector<std::vector<double>>& cols, std::vector<std::string> names) {
  DesignMatrix x;
  x.names = {"(Intercept)"};
  x.names.insert(x.names.end(), names.begin(), names.end());
  x.rows = cols.front().size();
  for (std::size_t r = 0; r < x.rows; ++r) {
    x.values.push_back(1.0);
    for (const auto& c : cols) x.values.push_back(c[r]);
  }
  return x;
}

std::vector<std::vector<double>> rows_of(const DesignMatrix& x) {
  std::vector<std::vector<double>> out(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    for (std::size_t c = 0; c < x.cols(); ++c) out[r].push_back(x.at(r, c));
  }
  return out;
}

}  // namespace

TEST(Ols, ExactLine) {
  const std::vector<double> y{1, 3, 5, 7, 9};
  const auto fit = ols_fit(with_intercept({{0, 1, 2, 3, 4}}, {"x"}), y);
  EXPECT_NEAR(fit.coefficients[0].estimate, 1.0, 1e-12);
  EXPECT_NEAR(fit.coefficients[1].estimate, 2.0, 1e-12);
  EXPECT_NEAR(fit.r2, 1.0, 1e-12);
}

TEST(Ols, ConstantResponse) {
  const std::vector<double> y{4, 4, 4, 4};
  const auto x = with_intercept({{0, 1, 2, 3}}, {"x"});
  const auto fit = ols_fit(x, y);
  EXPECT_NEAR(fit.coef("x").estimate, 0.0, 1e-12);
  EXPECT_EQ(fit.r2, 0.0);
  EXPECT_EQ(f_statistic(x, y), 0.0);
}

TEST(Ols, FourPointHandSolution) {
  const std::vector<double> y{1, 2, 2, 4};
  const auto fit = ols_fit(with_intercept({{0, 1, 2, 3}}, {"x"}), y);
  // Normal equations: [4 6; 6 14] b = [9; 19] gives b = (0.9, 0.9).
  EXPECT_NEAR(fit.coefficients[0].estimate, 0.9, 1e-12);
  EXPECT_NEAR(fit.coefficients[1].estimate, 0.9, 1e-12);
  // TSS = 4.75, RSS = 0.7.
  EXPECT_NEAR(fit.r2, 1.0 - 0.7 / 4.75, 1e-12);
  // SE(slope) = sqrt((0.7 / 2) / 5); with 2 df the t tail is closed form.
  const double se = std::sqrt(0.35 / 5.0);
  const double t = 0.9 / se;
  EXPECT_NEAR(fit.coef("x").std_error, se, 1e-12);
  EXPECT_NEAR(fit.coef("x").p_value, 1.0 - t / std::sqrt(t * t + 2.0), 1e-10);
  EXPECT_NEAR(fit.f_stat, t * t, 1e-9);
  EXPECT_NEAR(fit.f_p_value, fit.coef("x").p_value, 1e-10);
}

TEST(Ols, RankAndSizeErrors) {
  const std::vector<double> y{1, 2, 3, 4};
  EXPECT_THROW(ols_fit(with_intercept({{1, 2, 3, 4}, {2, 4, 6, 8}}, {"a", "b"}), y), StatsError);
  EXPECT_THROW(ols_fit(with_intercept({{1, 2, 3, 5}, {0, 1, 0, 2}, {3, 1, 2, 2}}, {"a", "b", "c"}), y), StatsError);
}

TEST(OlsProperty, MatchesNormalEquations) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 6 + uniform_index(rng, 20), k = 1 + uniform_index(rng, 3);
    std::vector<std::vector<double>> cols(k, std::vector<double>(n));
    std::vector<double> y(n);
    for (auto& c : cols) {
      for (auto& v : c) v = uniform01(rng) * 4 - 2;
    }
    for (auto& v : y) v = uniform01(rng) * 10;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < k; ++i) names.push_back("x" + std::to_string(i));
    const auto x = with_intercept(cols, names);
    const auto fit = ols_fit(x, y);
    const auto oracle = testkit::normal_equations(rows_of(x), y);
    for (std::size_t i = 0; i <= k; ++i) {
      EXPECT_NEAR(fit.coefficients[i].estimate, oracle.beta[i], 1e-8);
      EXPECT_NEAR(fit.coefficients[i].std_error, oracle.std_error[i], 1e-8);
    }
    EXPECT_NEAR(fit.r2, oracle.r2, 1e-10);
    EXPECT_NEAR(fit.f_stat, oracle.f_stat, 1e-8 * std::max(1.0, oracle.f_stat));
    double resid_sum = 0;
    for (double r : fit.residuals) resid_sum += r;
    EXPECT_NEAR(resid_sum, 0.0, 1e-9);
  }
}

TEST(Permutation, ConstantResponseHasUnitP) {
  const std::vector<double> y{2, 2, 2, 2, 2};
  const auto out = permutation_test_f(with_intercept({{0, 1, 2, 3, 4}}, {"x"}), y, {.n_permutations = 500});
  EXPECT_EQ(out.observed, 0.0);
  EXPECT_EQ(out.p_value, 1.0);
}

TEST(Permutation, MatchesExactEnumeration) {
  const std::vector<double> y{0.3, 1.9, 1.2, 3.8, 2.6, 4.1};
  const auto x = with_intercept({{0, 1, 2, 3, 4, 5}}, {"x"});
  const auto mc = permutation_test_f(x, y, {.n_permutations = 100000, .seed = 3});
  EXPECT_NEAR(mc.p_value, testkit::exact_permutation_p(rows_of(x), y), 0.02);
}

TEST(Permutation, SeededAndThreadIndependent) {
  const std::vector<double> y{0.3, 1.9, 1.2, 3.8, 2.6, 4.1, 0.2, 5.0};
  const auto x = with_intercept({{0, 1, 2, 3, 4, 5, 6, 7}}, {"x"});
  const auto a = permutation_test_f(x, y, {.n_permutations = 10000, .seed = 9, .threads = 1});
  const auto b = permutation_test_f(x, y, {.n_permutations = 10000, .seed = 9, .threads = 3});
  const auto c = permutation_test_f(x, y, {.n_permutations = 10000, .seed = 9, .threads = 1});
  EXPECT_EQ(a.extreme, b.extreme);
  EXPECT_EQ(a.p_value, c.p_value);
  EXPECT_EQ(a.p_value, (static_cast<double>(a.extreme) + 1.0) / 10001.0);
}

TEST(Records, ParseAndReject) {
  const auto rs = parse_records(
      "politician_id,stimulus_type,affiliation,gender,y_sprop,y_transformer\n"
      "p1,names,ruling,1,55.5,\np2,political,opposition,0,40,\n");
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[1].stimulus, StimulusType::Political);
  EXPECT_FALSE(rs[1].y_transformer.has_value());
  EXPECT_FALSE(parse_records("politician_id,stimulus_type,affiliation,gender,y_sprop\np1,names,ruling,1,55\n")
                   .at(0)
                   .y_transformer);
  EXPECT_THROW(parse_records("politician_id,stimulus_type,affiliation,gender,y_sprop,y_transformer\n"
                             "p1,names,ruling,1,55.5,60\np2,names,ruling,1,50,\n"),
               StatsError);
  EXPECT_THROW(parse_records("id,type\n"), StatsError);
  EXPECT_THROW(parse_records("politician_id,stimulus_type,affiliation,gender,y_sprop\np,names,gender,1,5\n"), StatsError);
  EXPECT_THROW(parse_records("politician_id,stimulus_type,affiliation,gender,y_sprop\np,weird,a,1,5\n"), StatsError);
  EXPECT_THROW(parse_records("politician_id,stimulus_type,affiliation,gender,y_sprop\np,names,a,2,5\n"), StatsError);
}

TEST(Approach1, DesignColumns) {
  const auto rs = testkit::audit_records(1, 1, false);
  const auto levels = affiliation_levels(rs);
  EXPECT_EQ(levels, (std::vector<std::string>{"ruling", "opposition", "independent"}));
  const auto x = approach1_design(rs, levels, "ruling");
  EXPECT_EQ(x.names, (std::vector<std::string>{"(Intercept)", "opposition", "independent", "gender"}));
  for (std::size_t r = 0; r < x.rows; ++r) {
    EXPECT_EQ(x.at(r, 1), rs[r].affiliation == "opposition" ? 1.0 : 0.0);
    EXPECT_EQ(x.at(r, 3), static_cast<double>(rs[r].gender));
  }
}

TEST(Approach1, OneFitPerStimulusType) {
  const auto rs = testkit::audit_records(2, 3, true);
  AuditOptions o;
  o.permutations.n_permutations = 200;
  const auto fits = approach1(rs, o);
  ASSERT_EQ(fits.size(), 3u);
  for (const auto& f : fits) {
    EXPECT_EQ(f.n, 18u);
    ASSERT_TRUE(f.transformer);
    EXPECT_LT(f.transformer->coef("opposition").estimate, -3.0);
  }
  o.reference = "opposition";
  EXPECT_GT(approach1(rs, o)[0].transformer->coef("ruling").estimate, 3.0);
  o.reference = "nobody";
  EXPECT_THROW(approach1(rs, o), StatsError);
}

TEST(BiasComponent, SumsNonInterceptTerms) {
  StratumFit fit;
  fit.stimulus = StimulusType::Names;
  RegressionResult t;
  t.coefficients = {{"(Intercept)", 50.0}, {"opposition", 0.0}, {"gender", 9.77}};
  fit.transformer = t;
  const std::vector<StratumFit> fits{fit};
  const std::vector<StimulusRecord> rs{{"w", StimulusType::Names, "ruling", 1, 0.0, 0.0},
                                       {"m", StimulusType::Names, "ruling", 0, 0.0, 0.0},
                                       {"o", StimulusType::Names, "opposition", 1, 0.0, 0.0}};
  const auto b = bias_component(rs, fits);
  EXPECT_EQ(b[0], 9.77);
  EXPECT_EQ(b[1], 0.0);
  EXPECT_EQ(b[2], 9.77);

  auto zero = fits;
  zero[0].transformer->coefficients[2].estimate = 0.0;
  for (double v : bias_component(rs, zero)) EXPECT_EQ(v, 0.0);
}

TEST(StratifiedSlopeProperty, EqualsFullRegression) {
  Rng rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    auto rs = testkit::audit_records(100 + trial, 2, true);
    std::vector<double> bias, y;
    for (const auto& r : rs) {
      bias.push_back(uniform01(rng) * 4);
      y.push_back(uniform01(rng) * 10 + static_cast<double>(r.stimulus));
    }
    const auto full = ols_fit(bias_design(rs, bias), y).coef("bias").estimate;
    EXPECT_NEAR(stratified_slope(rs, bias, y), full, 1e-9);
  }
}

TEST(Approach3, TransformerEqualsSpropPlusBias) {
  // SProp flat within each stratum, so its own fit has zero slopes and the
  // transformer's fitted bias is exactly the planted one.
  auto rs = testkit::audit_records(5, 2, true);
  for (auto& r : rs) {
    const double planted = (r.affiliation == "opposition" ? -4.0 : r.affiliation == "independent" ? 2.5 : 0.0) + 3.0 * r.gender;
    r.y_sprop = 40.0 + static_cast<double>(r.stimulus);
    r.y_transformer = r.y_sprop + planted;
  }
  AuditOptions o;
  o.permutations.n_permutations = 500;
  const auto report = run_audit(rs, o);
  ASSERT_TRUE(report.approach3);
  EXPECT_NEAR(report.approach3->fit.coef("bias").estimate, -1.0, 1e-8);
}

TEST(Approach2, IdenticalModelsRecoverZero) {
  auto rs = testkit::audit_records(6, 2, true);
  for (auto& r : rs) r.y_sprop = *r.y_transformer;
  AuditOptions o;
  o.permutations.n_permutations = 500;
  const auto report = run_audit(rs, o);
  ASSERT_TRUE(report.approach2);
  EXPECT_NEAR(report.approach2->fit.coef("bias").estimate, 0.0, 1e-8);
  for (const auto& c : report.approach3->fit.coefficients) EXPECT_NEAR(c.estimate, 0.0, 1e-8);
}

TEST(Approach2, ZeroBiasIsRankDeficient) {
  const auto rs = testkit::audit_records(6, 2, true);
  const std::vector<double> bias(rs.size(), 0.0);
  EXPECT_THROW(approach2(rs, bias, {.n_permutations = 10}), StatsError);
}

TEST(Approach2And3, TailsAndPermutationBounds) {
  const auto rs = testkit::audit_records(7, 3, true);
  AuditOptions o;
  o.permutations.n_permutations = 999;
  const auto report = run_audit(rs, o);
  EXPECT_EQ(report.approach2->test.tail, Tail::Lower);
  EXPECT_EQ(report.approach3->test.tail, Tail::Upper);
  for (const auto* t : {&report.approach2->test, &report.approach3->test}) {
    EXPECT_GT(t->p_value, 0.0);
    EXPECT_LE(t->p_value, 1.0);
    EXPECT_EQ(t->n_permutations, 999u);
  }
  const auto again = run_audit(rs, o);
  EXPECT_EQ(report_json(report), report_json(again));
}

TEST(Report, SkipsWithoutTransformer) {
  const auto rs = testkit::audit_records(3, 2, false);
  AuditOptions o;
  o.permutations.n_permutations = 100;
  const auto report = run_audit(rs, o);
  EXPECT_FALSE(report.approach2);
  EXPECT_FALSE(report.skipped_reason.empty());
  const auto tsv = report_tsv(report);
  EXPECT_EQ(tsv.substr(0, tsv.find('\n')), "block\tmodel\tterm\testimate\tstd_error\tt_value\tp_value\tstars\tnote");
  EXPECT_NE(tsv.find("skipped"), std::string::npos);
  EXPECT_NE(report_text(report).find("Approach 2: skipped"), std::string::npos);
}

TEST(Report, JsonCoversEveryBlock) {
  const auto rs = testkit::audit_records(4, 2, true);
  AuditOptions o;
  o.permutations.n_permutations = 100;
  const auto j = nlohmann::json::parse(report_json(run_audit(rs, o)));
  EXPECT_EQ(j.at("version"), "1");
  EXPECT_EQ(j.at("approach1").size(), 3u);
  EXPECT_FALSE(j.at("approach2").is_null());
  EXPECT_FALSE(j.at("approach3").is_null());
  EXPECT_EQ(j.at("bias_component").size(), rs.size());
}

TEST(Stars, Thresholds) {
  EXPECT_EQ(stars(0.005), "***");
  EXPECT_EQ(stars(0.02), "**");
  EXPECT_EQ(stars(0.07), "*");
  EXPECT_EQ(stars(0.2), "");
}
