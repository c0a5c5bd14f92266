#include "sprop/bias_audit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sprop/error.hpp"
#include "sprop/random.hpp"
#include "sprop/text.hpp"

namespace sprop::audit {
namespace {

constexpr std::string_view kIntercept = "(Intercept)";
constexpr std::size_t kBlock = 4096;

bool is_constant(std::span<const double> y) {
  return std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
}

// Relative slack for "at least as extreme" so that a permutation that
// reproduces the observed data counts regardless of summation order.
bool at_least(double value, double threshold) {
  if (std::isinf(threshold)) return value >= threshold;
  return value >= threshold - 1e-10 * std::max(1.0, std::abs(threshold));
}

// Runs n replicates in fixed blocks of kBlock, block b drawing from
// derive_seed(seed, b). make() builds a per-worker functor Rng& -> bool.
template <typename Make>
std::size_t count_extreme(const PermutationOptions& o, Make make) {
  const auto n_blocks = (o.n_permutations + kBlock - 1) / kBlock;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> total{0};
  auto worker = [&] {
    auto replicate = make();
    std::size_t local = 0;
    for (auto b = next++; b < n_blocks; b = next++) {
      Rng rng(derive_seed(o.seed, b));
      const auto count = std::min(kBlock, o.n_permutations - b * kBlock);
      for (std::size_t r = 0; r < count; ++r) local += replicate(rng) ? 1 : 0;
    }
    total += local;
  };
  const auto threads = std::clamp<std::size_t>(o.threads, 1, std::max<std::size_t>(n_blocks, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return total.load();
}

PermutationOutcome outcome(double observed, std::size_t extreme, const PermutationOptions& o, Tail tail) {
  return {observed, o.n_permutations, extreme,
          static_cast<double>(extreme + 1) / static_cast<double>(o.n_permutations + 1), tail, o.seed};
}

void check_options(const PermutationOptions& o) {
  if (o.n_permutations == 0) throw StatsError("at least one permutation is required");
}

Eigen::VectorXd to_eigen(std::span<const double> y) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(y.size()));
  std::copy(y.begin(), y.end(), v.data());
  return v;
}

// F of y on X from the thin Q factor. TSS and n*mean^2 do not change under
// permutation of y, so they are computed once.
struct FEvaluator {
  Eigen::MatrixXd qt;  // p x n
  std::size_t n = 0, p = 0;
  double tss = 0.0, n_mean_sq = 0.0;
  bool constant = false;

  FEvaluator(const DesignMatrix& x, std::span<const double> y) : n(x.rows), p(x.cols()) {
    if (y.size() != n) throw StatsError("design has " + std::to_string(n) + " rows but y has " + std::to_string(y.size()));
    if (p < 2) throw StatsError("F statistic needs at least one predictor besides the intercept");
    if (n <= p) throw StatsError("not enough observations for the design");
    Eigen::MatrixXd m(n, p);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < p; ++c) m(r, c) = x.at(r, c);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
    qr.setThreshold(1e-10);
    if (qr.rank() < static_cast<Eigen::Index>(p)) throw StatsError("design matrix is rank deficient");
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p);
    qt = q.transpose();
    constant = is_constant(y);
    double mean = 0.0;
    for (const double v : y) mean += v;
    mean /= static_cast<double>(n);
    for (const double v : y) tss += (v - mean) * (v - mean);
    n_mean_sq = static_cast<double>(n) * mean * mean;
  }

  // Takes an Eigen-owned vector: the product's rounding depends on the
  // address alignment of its operand.
  double operator()(const Eigen::VectorXd& v) const {
    if (constant) return 0.0;
    const double ess = std::max(0.0, (qt * v).squaredNorm() - n_mean_sq);
    const double rss = tss - ess;
    if (rss <= 0.0) return std::numeric_limits<double>::infinity();
    return (ess / static_cast<double>(p - 1)) / (rss / static_cast<double>(n - p));
  }
};

double t_p_value(double t, std::size_t df) {
  if (std::isnan(t)) return 1.0;
  if (std::isinf(t)) return 0.0;
  const boost::math::students_t dist(static_cast<double>(df));
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

std::vector<std::vector<std::size_t>> strata(std::span<const StimulusRecord> records) {
  std::vector<std::vector<std::size_t>> out(kStimulusTypeCount);
  for (std::size_t i = 0; i < records.size(); ++i) out[static_cast<std::size_t>(records[i].stimulus)].push_back(i);
  return out;
}

std::string fmt(double v, int decimals) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string fmt_p(double p) {
  if (p < 1e-4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2e", p);
    return buf;
  }
  return fmt(p, 4);
}

}  // namespace

std::string_view stimulus_name(StimulusType t) {
  switch (t) {
    case StimulusType::Names: return "names";
    case StimulusType::Neutral: return "neutral";
    case StimulusType::Political: return "political";
  }
  return "unknown";
}

std::optional<StimulusType> parse_stimulus(std::string_view s) {
  const auto lower = text::utf8_lower(text::trim(s));
  for (std::size_t k = 0; k < kStimulusTypeCount; ++k) {
    const auto t = static_cast<StimulusType>(k);
    if (lower == stimulus_name(t)) return t;
  }
  return std::nullopt;
}

std::string_view tail_name(Tail t) {
  switch (t) {
    case Tail::TwoSidedF: return "two_sided_f";
    case Tail::Lower: return "lower";
    case Tail::Upper: return "upper";
  }
  return "unknown";
}

std::string_view stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.1) return "*";
  return "";
}

const Coefficient& RegressionResult::coef(std::string_view name) const {
  for (const auto& c : coefficients) {
    if (c.name == name) return c;
  }
  throw StatsError("no coefficient named " + std::string(name));
}

std::vector<StimulusRecord> parse_records(std::string_view csv) {
  const std::vector<std::string> base = {"politician_id", "stimulus_type", "affiliation", "gender", "y_sprop"};
  std::vector<StimulusRecord> out;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  std::size_t with_transformer = 0;
  for (auto line : text::split(csv, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) continue;
    auto cells = text::split_record(line, line.find('\t') != std::string_view::npos ? '\t' : ',');
    for (auto& c : cells) c = std::string(text::trim(c));
    if (header.empty()) {
      header = cells;
      const bool ok = (header.size() == 5 || header.size() == 6) && std::equal(base.begin(), base.end(), header.begin()) &&
                      (header.size() == 5 || header[5] == "y_transformer");
      if (!ok) throw StatsError("audit input header must be politician_id,stimulus_type,affiliation,gender,y_sprop[,y_transformer]");
      continue;
    }
    // A trailing empty y_transformer cell may be dropped by the writer.
    if (cells.size() == 5 && header.size() == 6) cells.emplace_back();
    const auto where = " at line " + std::to_string(line_no);
    if (cells.size() != header.size()) throw StatsError("wrong number of columns" + where);
    StimulusRecord r;
    r.politician_id = cells[0];
    const auto stim = parse_stimulus(cells[1]);
    if (!stim) throw StatsError("unknown stimulus type `" + cells[1] + "`" + where);
    r.stimulus = *stim;
    r.affiliation = cells[2];
    if (r.affiliation.empty()) throw StatsError("empty affiliation" + where);
    if (r.affiliation == kIntercept || r.affiliation == "gender" || r.affiliation == "bias") {
      throw StatsError("affiliation name `" + r.affiliation + "` is reserved" + where);
    }
    if (cells[3] != "0" && cells[3] != "1") throw StatsError("gender must be 0 or 1" + where);
    r.gender = cells[3] == "1" ? 1 : 0;
    const auto y = text::parse_double(cells[4]);
    if (!y) throw StatsError("y_sprop is not a finite number" + where);
    r.y_sprop = *y;
    if (header.size() == 6 && !cells[5].empty()) {
      const auto yt = text::parse_double(cells[5]);
      if (!yt) throw StatsError("y_transformer is not a finite number" + where);
      r.y_transformer = *yt;
      ++with_transformer;
    }
    out.push_back(std::move(r));
  }
  if (out.empty()) throw StatsError("audit input has no records");
  if (with_transformer != 0 && with_transformer != out.size()) {
    throw StatsError("y_transformer must be given for every record or for none");
  }
  return out;
}

RegressionResult ols_fit(const DesignMatrix& x, std::span<const double> y) {
  const auto n = x.rows;
  const auto p = x.cols();
  if (x.values.size() != n * p) throw StatsError("design matrix storage does not match its shape");
  if (y.size() != n) throw StatsError("design has " + std::to_string(n) + " rows but y has " + std::to_string(y.size()));
  if (p == 0) throw StatsError("design matrix has no columns");
  if (n <= p) throw StatsError("need more observations (" + std::to_string(n) + ") than coefficients (" + std::to_string(p) + ")");

  Eigen::MatrixXd m(n, p);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < p; ++c) m(r, c) = x.at(r, c);
  }
  const Eigen::VectorXd v = to_eigen(y);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m);
  qr.setThreshold(1e-10);
  if (qr.rank() < static_cast<Eigen::Index>(p)) throw StatsError("design matrix is rank deficient");

  const Eigen::VectorXd beta = qr.solve(v);
  const Eigen::VectorXd resid = v - m * beta;
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const auto perm = qr.colsPermutation();
  const Eigen::MatrixXd xtx_inv = perm * (r_inv * r_inv.transpose()) * perm.transpose();

  RegressionResult out;
  out.n = n;
  out.df_resid = n - p;
  out.df_model = p - 1;
  const double rss = resid.squaredNorm();
  const double sigma2 = rss / static_cast<double>(out.df_resid);
  out.residual_se = std::sqrt(sigma2);
  for (std::size_t c = 0; c < p; ++c) {
    Coefficient k;
    k.name = x.names[c];
    k.estimate = beta(static_cast<Eigen::Index>(c));
    k.std_error = std::sqrt(std::max(0.0, sigma2 * xtx_inv(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(c))));
    if (k.std_error > 0.0) {
      k.t_value = k.estimate / k.std_error;
    } else {
      k.t_value = k.estimate == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), k.estimate);
    }
    k.p_value = k.estimate == 0.0 && k.std_error == 0.0 ? 1.0 : t_p_value(k.t_value, out.df_resid);
    out.coefficients.push_back(std::move(k));
  }
  out.residuals.assign(resid.data(), resid.data() + n);

  if (!is_constant(y)) {
    const double mean = v.mean();
    const double tss = (v.array() - mean).square().sum();
    out.r2 = std::clamp(1.0 - rss / tss, 0.0, 1.0);
    out.adj_r2 = 1.0 - (1.0 - out.r2) * static_cast<double>(n - 1) / static_cast<double>(out.df_resid);
    if (out.df_model > 0) {
      if (rss > 0.0) {
        out.f_stat = ((tss - rss) / static_cast<double>(out.df_model)) / sigma2;
        const boost::math::fisher_f dist(static_cast<double>(out.df_model), static_cast<double>(out.df_resid));
        out.f_p_value = boost::math::cdf(boost::math::complement(dist, std::max(0.0, out.f_stat)));
      } else {
        out.f_stat = std::numeric_limits<double>::infinity();
        out.f_p_value = 0.0;
      }
    }
  }
  return out;
}

double f_statistic(const DesignMatrix& x, std::span<const double> y) { return FEvaluator(x, y)(to_eigen(y)); }

PermutationOutcome permutation_test_f(const DesignMatrix& x, std::span<const double> y, const PermutationOptions& o) {
  check_options(o);
  const FEvaluator eval(x, y);
  const double observed = eval(to_eigen(y));
  const auto extreme = count_extreme(o, [&] {
    return [&eval, observed, scratch = to_eigen(y)](Rng& rng) mutable {
      shuffle(std::span<double>(scratch.data(), static_cast<std::size_t>(scratch.size())), rng);
      return at_least(eval(scratch), observed);
    };
  });
  return outcome(observed, extreme, o, Tail::TwoSidedF);
}

std::vector<std::string> affiliation_levels(std::span<const StimulusRecord> records) {
  std::vector<std::string> out;
  for (const auto& r : records) {
    if (std::find(out.begin(), out.end(), r.affiliation) == out.end()) out.push_back(r.affiliation);
  }
  return out;
}

DesignMatrix approach1_design(std::span<const StimulusRecord> records, std::span<const std::string> affiliations,
                              std::string_view reference) {
  DesignMatrix x;
  x.names.emplace_back(kIntercept);
  std::vector<std::string> dummies;
  for (const auto& a : affiliations) {
    if (a != reference) dummies.push_back(a);
  }
  x.names.insert(x.names.end(), dummies.begin(), dummies.end());
  x.names.emplace_back("gender");
  x.rows = records.size();
  for (const auto& r : records) {
    x.values.push_back(1.0);
    for (const auto& d : dummies) x.values.push_back(r.affiliation == d ? 1.0 : 0.0);
    x.values.push_back(static_cast<double>(r.gender));
  }
  return x;
}

std::vector<StratumFit> approach1(std::span<const StimulusRecord> records, const AuditOptions& options) {
  check_options(options.permutations);
  const auto levels = affiliation_levels(records);
  const auto reference = options.reference.empty() ? levels.front() : options.reference;
  if (std::find(levels.begin(), levels.end(), reference) == levels.end()) {
    throw StatsError("reference affiliation `" + reference + "` does not occur in the input");
  }
  const bool has_transformer = std::all_of(records.begin(), records.end(), [](const auto& r) { return r.y_transformer.has_value(); });

  std::vector<StratumFit> fits;
  const auto groups = strata(records);
  for (std::size_t s = 0; s < kStimulusTypeCount; ++s) {
    if (groups[s].empty()) continue;
    const auto type = static_cast<StimulusType>(s);
    std::vector<StimulusRecord> sub;
    for (const auto i : groups[s]) sub.push_back(records[i]);
    const auto where = std::string(" for stimulus type ") + std::string(stimulus_name(type));

    const auto present = affiliation_levels(sub);
    if (std::find(present.begin(), present.end(), reference) == present.end()) {
      throw StatsError("reference affiliation `" + reference + "` is missing" + where);
    }
    std::vector<std::string> ordered;
    for (const auto& a : levels) {
      if (std::find(present.begin(), present.end(), a) != present.end()) ordered.push_back(a);
    }
    std::set<std::pair<std::string, int>> distinct;
    for (const auto& r : sub) distinct.emplace(r.affiliation, r.gender);
    if (distinct.size() < 3) throw StatsError("fewer than 3 distinct predictor rows" + where);

    const auto x = approach1_design(sub, ordered, reference);
    StratumFit fit;
    fit.stimulus = type;
    fit.n = sub.size();
    std::vector<double> y;
    for (const auto& r : sub) y.push_back(r.y_sprop);
    try {
      fit.sprop = ols_fit(x, y);
      auto po = options.permutations;
      po.seed = derive_seed(options.permutations.seed, s);
      fit.sprop_test = permutation_test_f(x, y, po);
      fit.sprop_test.seed = options.permutations.seed;
      if (has_transformer) {
        std::vector<double> yt;
        for (const auto& r : sub) yt.push_back(*r.y_transformer);
        fit.transformer = ols_fit(x, yt);
        po.seed = derive_seed(options.permutations.seed, kStimulusTypeCount + s);
        fit.transformer_test = permutation_test_f(x, yt, po);
        fit.transformer_test->seed = options.permutations.seed;
      }
    } catch (const StatsError& e) {
      throw StatsError(e.what() + where);
    }
    fits.push_back(std::move(fit));
  }
  return fits;
}

std::vector<double> bias_component(std::span<const StimulusRecord> records, std::span<const StratumFit> fits) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    const auto it = std::find_if(fits.begin(), fits.end(), [&](const StratumFit& f) { return f.stimulus == r.stimulus; });
    if (it == fits.end() || !it->transformer) {
      throw StatsError("missing transformer fit for stimulus type " + std::string(stimulus_name(r.stimulus)));
    }
    double b = 0.0;
    for (const auto& c : it->transformer->coefficients) {
      if (c.name == kIntercept) continue;
      if (c.name == "gender") {
        b += c.estimate * static_cast<double>(r.gender);
      } else if (c.name == r.affiliation) {
        b += c.estimate;
      }
    }
    out.push_back(b);
  }
  return out;
}

DesignMatrix bias_design(std::span<const StimulusRecord> records, std::span<const double> bias) {
  if (bias.size() != records.size()) throw StatsError("bias column does not match the records");
  std::vector<bool> present(kStimulusTypeCount, false);
  for (const auto& r : records) present[static_cast<std::size_t>(r.stimulus)] = true;
  DesignMatrix x;
  x.names = {std::string(kIntercept), "bias"};
  std::vector<StimulusType> dummies;
  for (std::size_t s = 1; s < kStimulusTypeCount; ++s) {
    if (!present[s]) continue;
    dummies.push_back(static_cast<StimulusType>(s));
    x.names.emplace_back(stimulus_name(static_cast<StimulusType>(s)));
  }
  x.rows = records.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    x.values.push_back(1.0);
    x.values.push_back(bias[i]);
    for (const auto d : dummies) x.values.push_back(records[i].stimulus == d ? 1.0 : 0.0);
  }
  return x;
}

namespace {

// Within-stratum demeaned columns. The design's intercept plus stimulus
// dummies span exactly the stratum indicators, so by Frisch-Waugh the bias
// slope is sum(bd * yd) / sum(bd^2), and permuting bias inside a stratum
// permutes bd inside that stratum.
struct Demeaned {
  std::vector<std::vector<std::size_t>> groups;
  std::vector<double> bd, yd;
  double denom = 0.0;
};

Demeaned demean(std::span<const StimulusRecord> records, std::span<const double> bias, std::span<const double> y) {
  if (bias.size() != records.size() || y.size() != records.size()) throw StatsError("columns do not match the records");
  Demeaned d;
  d.groups = strata(records);
  d.bd.assign(bias.begin(), bias.end());
  d.yd.assign(y.begin(), y.end());
  for (const auto& g : d.groups) {
    if (g.empty()) continue;
    double mb = 0.0, my = 0.0;
    for (const auto i : g) {
      mb += bias[i];
      my += y[i];
    }
    mb /= static_cast<double>(g.size());
    my /= static_cast<double>(g.size());
    for (const auto i : g) {
      d.bd[i] -= mb;
      d.yd[i] -= my;
    }
  }
  for (const double v : d.bd) d.denom += v * v;
  if (!(d.denom > 0.0)) throw StatsError("bias column is constant within every stimulus type");
  return d;
}

double slope(const Demeaned& d, std::span<const double> bd) {
  double num = 0.0;
  for (std::size_t i = 0; i < bd.size(); ++i) num += bd[i] * d.yd[i];
  return num / d.denom;
}

DeltaResult delta_regression(std::span<const StimulusRecord> records, std::span<const double> bias,
                             std::span<const double> y, const PermutationOptions& o, Tail tail) {
  check_options(o);
  DeltaResult out;
  out.fit = ols_fit(bias_design(records, bias), y);
  const auto d = demean(records, bias, y);
  const double observed = slope(d, d.bd);
  const auto extreme = count_extreme(o, [&] {
    return [&d, observed, tail, scratch = d.bd](Rng& rng) mutable {
      for (const auto& g : d.groups) {
        // Fisher-Yates over the stratum's positions.
        for (std::size_t k = g.size(); k > 1; --k) std::swap(scratch[g[k - 1]], scratch[g[uniform_index(rng, k)]]);
      }
      const double b = slope(d, scratch);
      return tail == Tail::Lower ? at_least(-b, -observed) : at_least(b, observed);
    };
  });
  out.test = outcome(observed, extreme, o, tail);
  return out;
}

}  // namespace

double stratified_slope(std::span<const StimulusRecord> records, std::span<const double> bias, std::span<const double> y) {
  const auto d = demean(records, bias, y);
  return slope(d, d.bd);
}

DeltaResult approach2(std::span<const StimulusRecord> records, std::span<const double> bias, const PermutationOptions& o) {
  std::vector<double> adjusted;
  for (std::size_t i = 0; i < records.size(); ++i) adjusted.push_back(records[i].y_sprop - bias[i]);
  return delta_regression(records, bias, adjusted, o, Tail::Lower);
}

DeltaResult approach3(std::span<const StimulusRecord> records, std::span<const double> bias, const PermutationOptions& o) {
  std::vector<double> delta;
  for (const auto& r : records) {
    if (!r.y_transformer) throw StatsError("approach 3 needs y_transformer for every record");
    delta.push_back(r.y_sprop - *r.y_transformer);
  }
  return delta_regression(records, bias, delta, o, Tail::Upper);
}

AuditReport run_audit(std::span<const StimulusRecord> records, const AuditOptions& options) {
  if (records.empty()) throw StatsError("audit input has no records");
  AuditReport report;
  report.affiliations = affiliation_levels(records);
  report.reference = options.reference.empty() ? report.affiliations.front() : options.reference;
  report.n_records = records.size();
  report.approach1 = approach1(records, options);

  const bool has_transformer = std::all_of(records.begin(), records.end(), [](const auto& r) { return r.y_transformer.has_value(); });
  if (!has_transformer) {
    report.skipped_reason = "no y_transformer predictions";
    return report;
  }
  report.bias = bias_component(records, report.approach1);
  auto po = options.permutations;
  po.seed = derive_seed(options.permutations.seed, 2 * kStimulusTypeCount);
  report.approach2 = approach2(records, report.bias, po);
  report.approach2->test.seed = options.permutations.seed;
  po.seed = derive_seed(options.permutations.seed, 2 * kStimulusTypeCount + 1);
  report.approach3 = approach3(records, report.bias, po);
  report.approach3->test.seed = options.permutations.seed;
  return report;
}

// --- output -------------------------------------------------------------------

namespace {

using json = nlohmann::json;

json num(double v) { return std::isfinite(v) ? json(v) : json(text::format_double(v)); }

json fit_json(const RegressionResult& f) {
  json coefs = json::array();
  for (const auto& c : f.coefficients) {
    coefs.push_back({{"term", c.name},
                     {"estimate", num(c.estimate)},
                     {"std_error", num(c.std_error)},
                     {"t_value", num(c.t_value)},
                     {"p_value", num(c.p_value)}});
  }
  return {{"coefficients", coefs}, {"n", f.n},           {"df_model", f.df_model},
          {"df_resid", f.df_resid}, {"r2", num(f.r2)},   {"adj_r2", num(f.adj_r2)},
          {"residual_se", num(f.residual_se)},           {"f_stat", num(f.f_stat)},
          {"f_p_value", num(f.f_p_value)}};
}

json test_json(const PermutationOutcome& t) {
  return {{"statistic", num(t.observed)}, {"n_permutations", t.n_permutations}, {"extreme", t.extreme},
          {"p_value", num(t.p_value)},    {"tail", tail_name(t.tail)},          {"seed", t.seed}};
}

void tsv_fit(std::ostringstream& out, const std::string& block, const std::string& model, const RegressionResult& f,
             const PermutationOutcome& t) {
  for (const auto& c : f.coefficients) {
    out << block << '\t' << model << '\t' << c.name << '\t' << text::format_double(c.estimate) << '\t'
        << text::format_double(c.std_error) << '\t' << text::format_double(c.t_value) << '\t'
        << text::format_double(c.p_value) << '\t' << stars(c.p_value) << "\t\n";
  }
  auto stat = [&](std::string_view name, double v, std::string_view star = "") {
    out << block << '\t' << model << '\t' << name << '\t' << text::format_double(v) << "\t\t\t\t" << star << "\t\n";
  };
  stat("n", static_cast<double>(f.n));
  stat("df_resid", static_cast<double>(f.df_resid));
  stat("r2", f.r2);
  stat("adj_r2", f.adj_r2);
  stat("residual_se", f.residual_se);
  stat("f_stat", f.f_stat, stars(f.f_p_value));
  stat("f_p_value", f.f_p_value);
  stat("permutation_statistic", t.observed);
  stat("permutation_p", t.p_value, stars(t.p_value));
  stat("permutations", static_cast<double>(t.n_permutations));
}

struct Column {
  std::string title;
  const RegressionResult* fit;
  const PermutationOutcome* test;
};

void text_table(std::ostringstream& out, const std::string& title, const std::vector<Column>& cols) {
  std::vector<std::string> terms;
  for (const auto& c : cols) {
    for (const auto& k : c.fit->coefficients) {
      if (std::find(terms.begin(), terms.end(), k.name) == terms.end()) terms.push_back(k.name);
    }
  }
  std::size_t label_w = 22;
  for (const auto& t : terms) label_w = std::max(label_w, t.size() + 2);
  constexpr std::size_t col_w = 22;
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  auto row = [&](const std::string& label, const std::vector<std::string>& cells) {
    std::string line = pad(label, label_w);
    for (const auto& c : cells) line += pad(c, col_w);
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out << line << '\n';
  };
  auto per_col = [&](auto f) {
    std::vector<std::string> cells;
    for (const auto& c : cols) cells.push_back(f(c));
    return cells;
  };

  out << title << '\n';
  row("", per_col([](const Column& c) { return c.title; }));
  for (const auto& term : terms) {
    auto find = [&](const Column& c) -> const Coefficient* {
      for (const auto& k : c.fit->coefficients) {
        if (k.name == term) return &k;
      }
      return nullptr;
    };
    row(term, per_col([&](const Column& c) {
          const auto* k = find(c);
          return k ? fmt(k->estimate, 3) + std::string(stars(k->p_value)) : std::string();
        }));
    row("", per_col([&](const Column& c) {
          const auto* k = find(c);
          return k ? "(" + fmt(k->std_error, 3) + ")" : std::string();
        }));
  }
  row("Observations", per_col([](const Column& c) { return std::to_string(c.fit->n); }));
  row("R2", per_col([](const Column& c) { return fmt(c.fit->r2, 3); }));
  row("Adjusted R2", per_col([](const Column& c) { return fmt(c.fit->adj_r2, 3); }));
  row("Residual SE", per_col([](const Column& c) {
        return fmt(c.fit->residual_se, 3) + " (df=" + std::to_string(c.fit->df_resid) + ")";
      }));
  row("F statistic", per_col([](const Column& c) {
        return fmt(c.fit->f_stat, 3) + std::string(stars(c.fit->f_p_value)) + " (df=" + std::to_string(c.fit->df_model) +
               ";" + std::to_string(c.fit->df_resid) + ")";
      }));
  row("Permutation p", per_col([](const Column& c) {
        return fmt_p(c.test->p_value) + std::string(stars(c.test->p_value)) + " " + std::string(tail_name(c.test->tail));
      }));
  out << '\n';
}

}  // namespace

std::string report_tsv(const AuditReport& report) {
  std::ostringstream out;
  out << "block\tmodel\tterm\testimate\tstd_error\tt_value\tp_value\tstars\tnote\n";
  for (const auto& f : report.approach1) {
    const auto block = "approach1:" + std::string(stimulus_name(f.stimulus));
    tsv_fit(out, block, "sprop", f.sprop, f.sprop_test);
    if (f.transformer) tsv_fit(out, block, "transformer", *f.transformer, *f.transformer_test);
  }
  if (report.approach2) {
    tsv_fit(out, "approach2", "adjusted", report.approach2->fit, report.approach2->test);
  } else {
    out << "approach2\t-\tskipped\t\t\t\t\t\t" << report.skipped_reason << '\n';
  }
  if (report.approach3) {
    tsv_fit(out, "approach3", "delta", report.approach3->fit, report.approach3->test);
  } else {
    out << "approach3\t-\tskipped\t\t\t\t\t\t" << report.skipped_reason << '\n';
  }
  return out.str();
}

std::string report_json(const AuditReport& report) {
  json a1 = json::array();
  for (const auto& f : report.approach1) {
    json j = {{"stimulus_type", stimulus_name(f.stimulus)},
              {"n", f.n},
              {"sprop", fit_json(f.sprop)},
              {"sprop_permutation", test_json(f.sprop_test)}};
    j["transformer"] = f.transformer ? fit_json(*f.transformer) : json(nullptr);
    j["transformer_permutation"] = f.transformer_test ? test_json(*f.transformer_test) : json(nullptr);
    a1.push_back(std::move(j));
  }
  auto delta = [](const std::optional<DeltaResult>& d) {
    return d ? json{{"fit", fit_json(d->fit)}, {"permutation", test_json(d->test)}} : json(nullptr);
  };
  json bias = json::array();
  for (const double b : report.bias) bias.push_back(num(b));
  json out = {{"version", "1"},
              {"reference", report.reference},
              {"affiliations", report.affiliations},
              {"n_records", report.n_records},
              {"approach1", a1},
              {"bias_component", bias},
              {"approach2", delta(report.approach2)},
              {"approach3", delta(report.approach3)},
              {"skipped", report.skipped_reason.empty() ? json(nullptr) : json(report.skipped_reason)}};
  return out.dump(2) + "\n";
}

std::string report_text(const AuditReport& report) {
  std::ostringstream out;
  out << "Reference affiliation: " << report.reference << " (" << report.n_records << " records)\n\n";
  std::vector<Column> sprop_cols, transformer_cols;
  for (const auto& f : report.approach1) {
    sprop_cols.push_back({std::string(stimulus_name(f.stimulus)), &f.sprop, &f.sprop_test});
    if (f.transformer) transformer_cols.push_back({std::string(stimulus_name(f.stimulus)), &*f.transformer, &*f.transformer_test});
  }
  text_table(out, "Approach 1: SProp valence", sprop_cols);
  if (!transformer_cols.empty()) text_table(out, "Approach 1: transformer valence", transformer_cols);
  if (report.approach2) {
    text_table(out, "Approach 2: bias-adjusted SProp valence", {{"adjusted", &report.approach2->fit, &report.approach2->test}});
  } else {
    out << "Approach 2: skipped (" << report.skipped_reason << ")\n";
  }
  if (report.approach3) {
    text_table(out, "Approach 3: SProp minus transformer valence", {{"delta", &report.approach3->fit, &report.approach3->test}});
  } else {
    out << "Approach 3: skipped (" << report.skipped_reason << ")\n";
  }
  out << "Note: *p<0.1; **p<0.05; ***p<0.01\n";
  return out.str();
}

}  // namespace sprop::audit
