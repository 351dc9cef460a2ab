#include "tae/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <boost/math/distributions/students_t.hpp>

namespace tae {

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && ch != '_') {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(ch);
    }
  }
  flush();
  return out;
}

namespace {

std::vector<std::string> split_ws(std::string_view s) {
  std::istringstream is{std::string(s)};
  std::vector<std::string> out;
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

using Ngrams = std::map<std::vector<std::string>, int>;

Ngrams ngrams(const std::vector<std::string>& toks, std::size_t n) {
  Ngrams m;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++m[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return m;
}

}  // namespace

int exact_match(std::string_view pred, std::string_view gold) { return split_ws(pred) == split_ws(gold) ? 1 : 0; }

double corpus_bleu(std::span<const std::string> preds, std::span<const std::string> golds, double eps) {
  if (preds.size() != golds.size()) throw std::invalid_argument("corpus_bleu: prediction and reference counts differ");
  double match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
  double hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto h = word_tokens(preds[i]);
    const auto r = word_tokens(golds[i]);
    hyp_len += static_cast<double>(h.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hn = ngrams(h, n);
      const auto rn = ngrams(r, n);
      for (const auto& [g, c] : hn) {
        const auto it = rn.find(g);
        if (it != rn.end()) match[n - 1] += std::min(c, it->second);
        total[n - 1] += c;
      }
    }
  }
  if (match[0] == 0.0 || hyp_len == 0.0) return 0.0;
  double log_p = 0.0;
  for (int n = 0; n < 4; ++n) {
    if (total[n] == 0.0) continue;  // no hypothesis n-grams of this order: precision 1
    const double m = match[n] > 0.0 ? match[n] : eps;
    log_p += std::log(m / total[n]) / 4.0;
  }
  const double bp = hyp_len >= ref_len ? 1.0 : std::exp(1.0 - ref_len / hyp_len);
  return 100.0 * bp * std::exp(log_p);
}

CopyGenerationSplit split_copy_generation(std::string_view source, std::string_view gold) {
  std::unordered_map<std::string, int> avail;
  for (auto& w : word_tokens(source)) ++avail[w];
  CopyGenerationSplit s;
  for (auto& w : word_tokens(gold)) {
    auto it = avail.find(w);
    if (it != avail.end() && it->second > 0) {
      --it->second;
      s.copy.push_back(std::move(w));
    } else {
      s.generation.push_back(std::move(w));
    }
  }
  return s;
}

CopyGenerationBits copy_generation_accuracy(std::string_view source, std::string_view pred, std::string_view gold) {
  const auto g = split_copy_generation(source, gold);
  const auto p = split_copy_generation(source, pred);
  return {g.copy == p.copy ? 1 : 0, g.generation == p.generation ? 1 : 0};
}

Aggregate aggregate(std::span<const double> runs) {
  if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
  Aggregate a;
  a.n = runs.size();
  a.mean = std::accumulate(runs.begin(), runs.end(), 0.0) / static_cast<double>(a.n);
  if (a.n >= 2) {
    double ss = 0.0;
    for (double r : runs) ss += (r - a.mean) * (r - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

ComparisonResult aggregate_and_test(std::span<const double> runs_a, std::span<const double> runs_b) {
  if (runs_a.size() < 2 || runs_b.size() < 2) throw std::invalid_argument("t-test needs at least two runs per side");
  ComparisonResult r;
  r.a = aggregate(runs_a);
  r.b = aggregate(runs_b);
  const double va = *r.a.std * *r.a.std / static_cast<double>(r.a.n);
  const double vb = *r.b.std * *r.b.std / static_cast<double>(r.b.n);
  const double diff = r.a.mean - r.b.mean;
  if (va + vb == 0.0) {
    // Degenerate: no spread on either side.
    r.t = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.df = static_cast<double>(r.a.n + r.b.n - 2);
    r.p_value = diff == 0.0 ? 0.5 : (diff > 0.0 ? 0.0 : 1.0);
    return r;
  }
  r.t = diff / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) /
         (va * va / static_cast<double>(r.a.n - 1) + vb * vb / static_cast<double>(r.b.n - 1));
  const boost::math::students_t dist(r.df);
  r.p_value = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

EvalReport evaluate(std::span<const std::string> sources, std::span<const std::string> preds,
                    std::span<const std::string> golds) {
  if (sources.size() != preds.size() || preds.size() != golds.size())
    throw std::invalid_argument("evaluate: sources, predictions and references differ in count");
  EvalReport r;
  r.n = preds.size();
  if (r.n == 0) return r;
  double copy = 0, gen = 0, em = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    r.exact.push_back(exact_match(preds[i], golds[i]));
    em += r.exact.back();
    const auto b = copy_generation_accuracy(sources[i], preds[i], golds[i]);
    copy += b.copy;
    gen += b.generation;
  }
  const double n = static_cast<double>(r.n);
  r.exact_match = em / n;
  r.copy_accuracy = copy / n;
  r.generation_accuracy = gen / n;
  r.bleu = corpus_bleu(preds, golds);
  return r;
}

nlohmann::json to_json(const EvalReport& r) {
  return {{"n", r.n},
          {"exact_match", r.exact_match},
          {"bleu", r.bleu},
          {"copy_accuracy", r.copy_accuracy},
          {"generation_accuracy", r.generation_accuracy},
          {"exact", r.exact}};
}

std::string format_report(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "examples             %zu\nexact match          %.2f%%\nBLEU                 %.2f\n"
                "copy accuracy        %.2f%%\ngeneration accuracy  %.2f%%\n",
                r.n, 100 * r.exact_match, r.bleu, 100 * r.copy_accuracy, 100 * r.generation_accuracy);
  return buf;
}

namespace {

std::vector<std::string> metric_names(const SeedResults& results, const std::vector<std::string>& modes) {
  std::vector<std::string> names;
  for (const auto& m : modes)
    if (auto it = results.find(m); it != results.end())
      for (const auto& [name, _] : it->second)
        if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
  return names;
}

}  // namespace

nlohmann::json comparison_json(const SeedResults& results, const std::vector<std::string>& modes) {
  nlohmann::json j;
  j["modes"] = modes;
  for (const auto& mode : modes) {
    const auto& metrics = results.at(mode);
    for (const auto& [name, runs] : metrics) {
      auto& e = j["results"][mode][name];
      e["runs"] = runs;
      const auto a = aggregate(runs);
      e["mean"] = a.mean;
      e["std"] = a.std ? nlohmann::json(*a.std) : nlohmann::json(nullptr);
      if (mode != modes.front() && runs.size() >= 2) {
        const auto& base = results.at(modes.front()).at(name);
        if (base.size() >= 2) e["p_value_vs_" + modes.front()] = aggregate_and_test(runs, base).p_value;
      }
    }
  }
  return j;
}

std::string format_comparison(const SeedResults& results, const std::vector<std::string>& modes) {
  const auto names = metric_names(results, modes);
  std::string primary = names.empty() ? "" : names.front();
  if (std::find(names.begin(), names.end(), "exact_match") != names.end()) primary = "exact_match";
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-22s", "mode");
  os << buf;
  for (const auto& n : names) {
    std::snprintf(buf, sizeof buf, "%-24s", n.c_str());
    os << buf;
  }
  os << "p(" << primary << " > " << modes.front() << ")\n";
  for (const auto& mode : modes) {
    std::snprintf(buf, sizeof buf, "%-22s", mode.c_str());
    os << buf;
    const auto& metrics = results.at(mode);
    for (const auto& n : names) {
      const auto it = metrics.find(n);
      if (it == metrics.end()) {
        std::snprintf(buf, sizeof buf, "%-24s", "-");
      } else {
        const auto a = aggregate(it->second);
        if (a.std)
          std::snprintf(buf, sizeof buf, "%8.4f +- %-12.4f", a.mean, *a.std);
        else
          std::snprintf(buf, sizeof buf, "%8.4f (n=1)%-10s", a.mean, "");
      }
      os << buf;
    }
    if (mode != modes.front() && !names.empty()) {
      const auto& runs = metrics.at(primary);
      const auto& base = results.at(modes.front()).at(primary);
      if (runs.size() >= 2 && base.size() >= 2) {
        std::snprintf(buf, sizeof buf, "%.4f", aggregate_and_test(runs, base).p_value);
        os << buf;
      } else {
        os << "n/a";
      }
    } else {
      os << "-";
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace tae
