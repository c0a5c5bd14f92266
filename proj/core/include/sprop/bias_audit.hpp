#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sprop::audit {

enum class StimulusType : std::uint8_t { Names = 0, Neutral = 1, Political = 2 };
inline constexpr std::size_t kStimulusTypeCount = 3;

std::string_view stimulus_name(StimulusType t);
std::optional<StimulusType> parse_stimulus(std::string_view s);

struct StimulusRecord {
  std::string politician_id;
  StimulusType stimulus = StimulusType::Names;
  std::string affiliation;
  int gender = 0;  // woman = 1, man = 0
  double y_sprop = 0.0;
  std::optional<double> y_transformer;
};

// `politician_id,stimulus_type,affiliation,gender,y_sprop[,y_transformer]`.
// A y_transformer column whose cells are all empty counts as absent.
std::vector<StimulusRecord> parse_records(std::string_view csv);

// Row-major design matrix; column 0 is normally the intercept.
struct DesignMatrix {
  std::vector<std::string> names;
  std::size_t rows = 0;
  std::vector<double> values;

  std::size_t cols() const noexcept { return names.size(); }
  double at(std::size_t r, std::size_t c) const { return values[r * names.size() + c]; }
};

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double t_value = 0.0;
  double p_value = 1.0;  // two-sided, Student t with df_resid
};

struct RegressionResult {
  std::vector<Coefficient> coefficients;
  std::vector<double> residuals;
  std::size_t n = 0;
  std::size_t df_model = 0;  // predictors excluding the intercept
  std::size_t df_resid = 0;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  double residual_se = 0.0;
  double f_stat = 0.0;
  double f_p_value = 1.0;

  const Coefficient& coef(std::string_view name) const;
};

// Least squares via column-pivoted QR with classical standard errors.
// Throws StatsError when n <= cols or X is rank deficient.
RegressionResult ols_fit(const DesignMatrix& x, std::span<const double> y);

// Regression F of y on X (X must contain an intercept); 0 when y is constant.
double f_statistic(const DesignMatrix& x, std::span<const double> y);

enum class Tail : std::uint8_t { TwoSidedF = 0, Lower = 1, Upper = 2 };
std::string_view tail_name(Tail t);

struct PermutationOutcome {
  double observed = 0.0;
  std::size_t n_permutations = 0;
  std::size_t extreme = 0;
  double p_value = 1.0;  // (extreme + 1) / (n_permutations + 1)
  Tail tail = Tail::TwoSidedF;
  std::uint64_t seed = 0;
};

struct PermutationOptions {
  std::size_t n_permutations = 100000;
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

// Shuffles y against the fixed rows of X and counts permuted F >= observed.
// Replicates are drawn in fixed blocks with their own derived streams, so the
// outcome does not depend on the thread count.
PermutationOutcome permutation_test_f(const DesignMatrix& x, std::span<const double> y, const PermutationOptions& options);

// Intercept, one dummy per affiliation other than the reference (in order of
// first appearance), gender.
DesignMatrix approach1_design(std::span<const StimulusRecord> records, std::span<const std::string> affiliations,
                              std::string_view reference);

// All affiliations in order of first appearance.
std::vector<std::string> affiliation_levels(std::span<const StimulusRecord> records);

struct StratumFit {
  StimulusType stimulus = StimulusType::Names;
  std::size_t n = 0;
  RegressionResult sprop;
  PermutationOutcome sprop_test;
  std::optional<RegressionResult> transformer;
  std::optional<PermutationOutcome> transformer_test;
};

struct AuditOptions {
  PermutationOptions permutations;
  // Reference (baseline) affiliation; the first one in the input when empty.
  std::string reference;
};

// Approach 1 per stimulus type present, in enum order.
std::vector<StratumFit> approach1(std::span<const StimulusRecord> records, const AuditOptions& options);

// bias_i = sum of the transformer's non-intercept Approach-1 coefficients
// times the record's predictors, using the fit for the record's stimulus type.
std::vector<double> bias_component(std::span<const StimulusRecord> records, std::span<const StratumFit> fits);

struct DeltaResult {
  RegressionResult fit;
  PermutationOutcome test;
};

// Design [intercept, bias, stimulus dummies (reference NAMES)].
DesignMatrix bias_design(std::span<const StimulusRecord> records, std::span<const double> bias);

// Slope on the bias column with stimulus-type fixed effects, computed by
// within-stratum demeaning. Equals ols_fit(bias_design(...)).coef("bias").
double stratified_slope(std::span<const StimulusRecord> records, std::span<const double> bias, std::span<const double> y);

// Y_adjusted = y_sprop - bias regressed on bias_design; bias column permuted
// within stimulus types; lower tail on the bias coefficient.
DeltaResult approach2(std::span<const StimulusRecord> records, std::span<const double> bias,
                      const PermutationOptions& options);

// dY = y_sprop - y_transformer on bias_design; upper tail.
DeltaResult approach3(std::span<const StimulusRecord> records, std::span<const double> bias,
                      const PermutationOptions& options);

struct AuditReport {
  std::string reference;
  std::vector<std::string> affiliations;
  std::size_t n_records = 0;
  std::vector<StratumFit> approach1;
  std::vector<double> bias;  // empty without transformer predictions
  std::optional<DeltaResult> approach2;
  std::optional<DeltaResult> approach3;
  // Why Approach 2/3 were not run, when they were not.
  std::string skipped_reason;
};

AuditReport run_audit(std::span<const StimulusRecord> records, const AuditOptions& options);

// "*" p<0.1, "**" p<0.05, "***" p<0.01.
std::string_view stars(double p);

std::string report_tsv(const AuditReport& report);
std::string report_json(const AuditReport& report);
std::string report_text(const AuditReport& report);

}  // namespace sprop::audit
