#include "digesttab/stats/stats.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "digesttab/core/csv.hpp"
#include "digesttab/core/hash.hpp"
#include "digesttab/core/parallel.hpp"
#include "digesttab/core/text.hpp"

namespace digesttab::stats {

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw TooFewSamples("mean of an empty sample");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean(xs), ss = 0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw TooFewSamples("percentile of an empty sample");
  double h = q * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::size_t> bootstrap_indices(std::size_t n, std::uint64_t seed, std::size_t iteration) {
  std::mt19937_64 engine(splitmix64(splitmix64(seed) + iteration));
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = static_cast<std::size_t>(engine() % n);
  return idx;
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& samples, const Statistic& statistic,
                                       const BootstrapOptions& options) {
  if (samples.size() < 2) throw TooFewSamples("bootstrap needs at least 2 samples");
  if (options.iterations == 0) throw ValidationError("bootstrap needs at least 1 iteration");
  if (!(options.confidence > 0 && options.confidence < 1)) throw ValidationError("confidence must be in (0,1)");
  std::vector<double> stats(options.iterations);
  parallel_for(options.iterations, options.workers, [&](std::size_t i) {
    auto idx = bootstrap_indices(samples.size(), options.seed, i);
    std::vector<double> resample(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) resample[k] = samples[idx[k]];
    stats[i] = statistic(resample);
  });
  std::sort(stats.begin(), stats.end());
  double alpha = (1.0 - options.confidence) / 2.0;
  return {percentile_sorted(stats, alpha), percentile_sorted(stats, 1.0 - alpha)};
}

AgreementResult cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.size() != b.size()) throw ValidationError("cohen_kappa: label lists differ in length");
  if (a.empty()) throw TooFewSamples("cohen_kappa: no items");
  const double n = static_cast<double>(a.size());
  std::map<std::string, double> fa, fb;
  double agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    fa[a[i]] += 1;
    fb[b[i]] += 1;
    agree += a[i] == b[i];
  }
  double po = agree / n, pe = 0;
  for (const auto& [label, ca] : fa) {
    auto it = fb.find(label);
    if (it != fb.end()) pe += (ca / n) * (it->second / n);
  }
  if (pe >= 1.0) return {1.0, true};
  return {(po - pe) / (1.0 - pe), false};
}

AgreementResult krippendorff_alpha(const std::vector<std::vector<std::optional<double>>>& ratings, AlphaLevel level) {
  if (ratings.size() < 2) throw TooFewSamples("krippendorff_alpha needs at least 2 raters");
  std::size_t items = 0;
  for (const auto& r : ratings) items = std::max(items, r.size());
  // pairable values per unit
  std::vector<std::vector<double>> units;
  std::set<double> values;
  for (std::size_t u = 0; u < items; ++u) {
    std::vector<double> vs;
    for (const auto& r : ratings) {
      if (u < r.size() && r[u]) vs.push_back(*r[u]);
    }
    if (vs.size() >= 2) {
      for (double v : vs) values.insert(v);
      units.push_back(std::move(vs));
    }
  }
  if (units.empty()) throw TooFewSamples("krippendorff_alpha: no item rated by 2 or more raters");
  std::vector<double> cats(values.begin(), values.end());
  const std::size_t k = cats.size();
  auto index = [&](double v) {
    return static_cast<std::size_t>(std::lower_bound(cats.begin(), cats.end(), v) - cats.begin());
  };
  std::vector<std::vector<double>> o(k, std::vector<double>(k, 0.0));
  for (const auto& vs : units) {
    const double m = static_cast<double>(vs.size());
    for (std::size_t i = 0; i < vs.size(); ++i) {
      for (std::size_t j = 0; j < vs.size(); ++j) {
        if (i != j) o[index(vs[i])][index(vs[j])] += 1.0 / (m - 1.0);
      }
    }
  }
  std::vector<double> nc(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) nc[c] = std::accumulate(o[c].begin(), o[c].end(), 0.0);
  const double n = std::accumulate(nc.begin(), nc.end(), 0.0);
  auto delta2 = [&](std::size_t c, std::size_t d) -> double {
    if (c == d) return 0.0;
    switch (level) {
      case AlphaLevel::Nominal: return 1.0;
      case AlphaLevel::Interval: return (cats[c] - cats[d]) * (cats[c] - cats[d]);
      case AlphaLevel::Ordinal: {
        auto lo = std::min(c, d), hi = std::max(c, d);
        double s = 0;
        for (std::size_t g = lo; g <= hi; ++g) s += nc[g];
        s -= (nc[lo] + nc[hi]) / 2.0;
        return s * s;
      }
    }
    return 0.0;
  };
  double observed = 0, expected = 0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) {
      double w = delta2(c, d);
      observed += o[c][d] * w;
      expected += nc[c] * nc[d] * w;
    }
  }
  if (expected == 0) return {1.0, true};
  return {1.0 - (n - 1.0) * observed / expected, false};
}

namespace {

// Midranks of the pooled sample, doubled so they stay integral.
std::vector<long> doubled_midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pooled[a] < pooled[b]; });
  std::vector<long> r2(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    long twice_mid = static_cast<long>(i + 1 + j + 1);  // (first + last) rank
    for (std::size_t t = i; t <= j; ++t) r2[order[t]] = twice_mid;
    i = j + 1;
  }
  return r2;
}

}  // namespace

MannWhitney mann_whitney_u(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw TooFewSamples("mann_whitney_u needs non-empty samples");
  const std::size_t n1 = x.size(), n2 = y.size(), N = n1 + n2;
  std::vector<double> pooled(x);
  pooled.insert(pooled.end(), y.begin(), y.end());
  auto r2 = doubled_midranks(pooled);
  long rx2 = 0;
  for (std::size_t i = 0; i < n1; ++i) rx2 += r2[i];
  // U = R_x - n1(n1+1)/2, kept doubled
  const long offset2 = static_cast<long>(n1 * (n1 + 1));
  const long u2 = rx2 - offset2;
  MannWhitney out;
  out.u = static_cast<double>(u2) / 2.0;
  const double mu = static_cast<double>(n1 * n2) / 2.0;

  if (N <= kExactMannWhitneyMaxN) {
    // ways[k][s]: subsets of size k with doubled rank sum s
    long max_sum = std::accumulate(r2.begin(), r2.end(), 0L);
    std::vector<std::vector<double>> ways(n1 + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    ways[0][0] = 1;
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t k = std::min(i + 1, n1); k >= 1; --k) {
        for (long s = max_sum; s >= r2[i]; --s) ways[k][static_cast<std::size_t>(s)] += ways[k - 1][static_cast<std::size_t>(s - r2[i])];
      }
    }
    double total = 0, extreme = 0;
    const double dev = std::abs(out.u - mu);
    for (long s = 0; s <= max_sum; ++s) {
      double w = ways[n1][static_cast<std::size_t>(s)];
      if (w == 0) continue;
      total += w;
      double u = static_cast<double>(s - offset2) / 2.0;
      if (std::abs(u - mu) >= dev - 1e-9) extreme += w;
    }
    out.p = std::min(1.0, extreme / total);
    out.exact = true;
    return out;
  }

  std::map<long, double> ties;
  for (long r : r2) ties[r] += 1;
  double tie_term = 0;
  for (const auto& [r, t] : ties) tie_term += t * t * t - t;
  const double Nd = static_cast<double>(N);
  const double var = static_cast<double>(n1 * n2) / 12.0 * ((Nd + 1.0) - tie_term / (Nd * (Nd - 1.0)));
  if (var <= 0) {
    out.p = 1.0;
    return out;
  }
  double z = std::max(0.0, std::abs(out.u - mu) - 0.5) / std::sqrt(var);
  out.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

Summary summarize(const std::vector<double>& xs) {
  if (xs.empty()) throw TooFewSamples("summarize: no values");
  Summary s;
  s.n = xs.size();
  s.mean = mean(xs);
  s.sd = sample_sd(xs);
  double half = 1.959963984540054 * s.sd / std::sqrt(static_cast<double>(s.n));
  s.ci95 = {s.mean - half, s.mean + half};
  return s;
}

const char* to_string(LikertDimension d) {
  switch (d) {
    case LikertDimension::Useful: return "Useful";
    case LikertDimension::Specific: return "Specific";
    case LikertDimension::Insightful: return "Insightful";
  }
  return "?";
}

LikertDimension likert_dimension_from_string(const std::string& s) {
  auto f = text::casefold(text::trim(s));
  if (f == "useful" || f == "usefulness") return LikertDimension::Useful;
  if (f == "specific" || f == "specificity") return LikertDimension::Specific;
  if (f == "insightful" || f == "insightfulness") return LikertDimension::Insightful;
  throw ValidationError("unknown Likert dimension '" + s + "'");
}

std::vector<LikertRating> read_ratings_csv(const std::string& csv_text) {
  auto rows = csv::parse(csv_text);
  if (rows.empty()) throw ValidationError("ratings CSV is empty");
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < rows[0].size(); ++i) col[text::trim(rows[0][i])] = i;
  for (const char* need : {"table_id", "aspect", "dimension", "rater_id", "value"}) {
    if (!col.contains(need)) throw ValidationError(std::string("ratings CSV lacks column '") + need + "'");
  }
  std::vector<LikertRating> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() == 1 && text::is_blank(row[0])) continue;
    if (row.size() != rows[0].size()) throw ValidationError("ratings CSV line " + std::to_string(r + 1) + " is ragged");
    LikertRating x;
    x.condition = col.contains("condition") ? row[col["condition"]] : "all";
    x.table_id = row[col["table_id"]];
    x.aspect = row[col["aspect"]];
    x.dimension = likert_dimension_from_string(row[col["dimension"]]);
    x.rater_id = row[col["rater_id"]];
    const auto& v = text::trim(row[col["value"]]);
    if (v.size() != 1 || v[0] < '1' || v[0] > '5') {
      throw ValidationError("ratings CSV line " + std::to_string(r + 1) + ": value must be an integer 1..5");
    }
    x.value = v[0] - '0';
    out.push_back(x);
  }
  return out;
}

MatchedReport matched_vs_unmatched_report(std::vector<LikertRating> ratings, const AlignmentVerdicts& alignments) {
  MatchedReport rep;
  for (auto& r : ratings) {
    if (r.value < 1 || r.value > 5) throw ValidationError("Likert value out of range");
    auto it = alignments.find({r.table_id, r.aspect});
    if (it == alignments.end()) {
      throw MissingAlignment("no alignment verdict for aspect '" + r.aspect + "' of table '" + r.table_id + "'");
    }
    r.matched_gold = it->second;
    if (std::find(rep.conditions.begin(), rep.conditions.end(), r.condition) == rep.conditions.end()) {
      rep.conditions.push_back(r.condition);
    }
  }
  std::sort(rep.conditions.begin(), rep.conditions.end());
  for (const auto& cond : rep.conditions) {
    std::set<std::tuple<std::string, std::string, std::string>> m_items, nm_items;
    for (auto dim : {LikertDimension::Useful, LikertDimension::Specific, LikertDimension::Insightful}) {
      std::vector<double> m, nm;
      for (const auto& r : ratings) {
        if (r.condition != cond || r.dimension != dim) continue;
        (r.matched_gold ? m : nm).push_back(r.value);
        (r.matched_gold ? m_items : nm_items).insert({r.table_id, r.aspect, r.rater_id});
      }
      GroupCell cell;
      if (!m.empty()) cell.matched = summarize(m);
      if (!nm.empty()) cell.unmatched = summarize(nm);
      if (!m.empty() && !nm.empty()) cell.test = mann_whitney_u(m, nm);
      rep.cells[{cond, dim}] = cell;
    }
    rep.samples[cond] = {m_items.size(), nm_items.size()};
  }
  return rep;
}

namespace {

ojson summary_json(const std::optional<Summary>& s) {
  if (!s) return nullptr;
  return ojson{{"mean", s->mean}, {"sd", s->sd}, {"n", s->n}, {"ci95", {s->ci95.first, s->ci95.second}}};
}

std::string fixed2(double v) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << v;
  return o.str();
}

std::string mean_sd(const std::optional<Summary>& s) {
  return s ? fixed2(s->mean) + " (" + fixed2(s->sd) + ")" : "n/a";
}

}  // namespace

ojson MatchedReport::to_json() const {
  ojson j;
  j["conditions"] = ojson::array();
  for (const auto& cond : conditions) {
    ojson c;
    c["condition"] = cond;
    for (auto dim : {LikertDimension::Useful, LikertDimension::Specific, LikertDimension::Insightful}) {
      const auto& cell = cells.at({cond, dim});
      ojson d;
      d["M"] = summary_json(cell.matched);
      d["NM"] = summary_json(cell.unmatched);
      if (cell.test) {
        d["mann_whitney"] = {{"U", cell.test->u}, {"p", cell.test->p}, {"exact", cell.test->exact}};
      } else {
        d["mann_whitney"] = nullptr;
      }
      c[to_string(dim)] = d;
    }
    c["samples"] = {{"M", samples.at(cond).first}, {"NM", samples.at(cond).second}};
    j["conditions"].push_back(c);
  }
  return j;
}

std::string MatchedReport::to_markdown() const {
  std::ostringstream o;
  o << "| |";
  for (const auto& c : conditions) o << " " << c << " M | " << c << " NM | p |";
  o << "\n|---|";
  for (std::size_t i = 0; i < conditions.size(); ++i) o << "---|---|---|";
  o << "\n";
  for (auto dim : {LikertDimension::Useful, LikertDimension::Specific, LikertDimension::Insightful}) {
    o << "| " << to_string(dim) << " |";
    for (const auto& c : conditions) {
      const auto& cell = cells.at({c, dim});
      o << " " << mean_sd(cell.matched) << " | " << mean_sd(cell.unmatched) << " | "
        << (cell.test ? fixed2(cell.test->p) : std::string("n/a")) << " |";
    }
    o << "\n";
  }
  o << "| # Samples |";
  for (const auto& c : conditions) {
    auto [m, nm] = samples.at(c);
    o << " " << m << " | " << (nm ? std::to_string(nm) : std::string("n/a")) << " | |";
  }
  o << "\n";
  return o.str();
}

std::string format_share(std::size_t count, std::size_t total) {
  if (total == 0) return "n/a (0)";
  return fixed2(100.0 * static_cast<double>(count) / static_cast<double>(total)) + "% (" + std::to_string(count) + ")";
}

}  // namespace digesttab::stats
