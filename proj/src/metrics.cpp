#include "resicap/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace resicap::metrics {

namespace {

void validate_pairs(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw InputError("no evaluation pairs");
  for (const auto& pair : pairs) {
    if (pair.references.empty()) throw InputError("evaluation pair has no references");
  }
}

// Counts of space-joined n-grams of one order in a token sequence.
std::unordered_map<std::string, int> ngram_counts(const std::vector<std::string>& tokens,
                                                  int n) {
  std::unordered_map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string gram = tokens[i];
    for (int j = 1; j < n; ++j) {
      gram += ' ';
      gram += tokens[i + static_cast<std::size_t>(j)];
    }
    ++counts[gram];
  }
  return counts;
}

int closest_reference_length(const EvalPair& pair) {
  const int cand_len = static_cast<int>(pair.candidate.size());
  int best_len = static_cast<int>(pair.references.front().size());
  for (const auto& ref : pair.references) {
    const int len = static_cast<int>(ref.size());
    const int diff = std::abs(len - cand_len);
    const int best_diff = std::abs(best_len - cand_len);
    if (diff < best_diff || (diff == best_diff && len < best_len)) best_len = len;
  }
  return best_len;
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t rows = a.size();
  const std::size_t cols = b.size();
  if (rows == 0 || cols == 0) return 0;
  std::vector<int> prev(cols + 1, 0);
  std::vector<int> curr(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    for (std::size_t j = 1; j <= cols; ++j) {
      curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[cols];
}

// tf-idf weight vector for one sentence at one n-gram order, plus its norm.
struct WeightedVector {
  std::unordered_map<std::string, double> weights;
  double norm = 0.0;
};

WeightedVector tf_idf(const std::vector<std::string>& tokens, int n,
                      const CorpusStats& stats) {
  WeightedVector vec;
  double sq = 0.0;
  const auto& df = stats.doc_freq[static_cast<std::size_t>(n - 1)];
  for (const auto& [gram, count] : ngram_counts(tokens, n)) {
    const auto it = df.find(gram);
    const double docs = it == df.end() ? 0.0 : static_cast<double>(it->second);
    const double idf = std::log(static_cast<double>(stats.num_videos) / std::max(1.0, docs));
    const double w = static_cast<double>(count) * idf;
    vec.weights.emplace(gram, w);
    sq += w * w;
  }
  vec.norm = std::sqrt(sq);
  return vec;
}

double cosine(const WeightedVector& a, const WeightedVector& b) {
  if (a.norm == 0.0 || b.norm == 0.0) return 0.0;
  double dot = 0.0;
  for (const auto& [gram, w] : a.weights) {
    const auto it = b.weights.find(gram);
    if (it != b.weights.end()) dot += w * it->second;
  }
  return dot / (a.norm * b.norm);
}

}  // namespace

double bleu(const std::vector<EvalPair>& pairs, int n) {
  if (n < 1 || n > 4) throw ConfigError("BLEU order must lie in 1..4");
  validate_pairs(pairs);

  long long cand_total = 0;
  long long ref_total = 0;
  std::vector<long long> matched(static_cast<std::size_t>(n), 0);
  std::vector<long long> possible(static_cast<std::size_t>(n), 0);
  for (const auto& pair : pairs) {
    cand_total += static_cast<long long>(pair.candidate.size());
    ref_total += closest_reference_length(pair);
    for (int k = 1; k <= n; ++k) {
      std::unordered_map<std::string, int> clip;
      for (const auto& ref : pair.references) {
        for (const auto& [gram, count] : ngram_counts(ref, k)) {
          auto& best = clip[gram];
          best = std::max(best, count);
        }
      }
      for (const auto& [gram, count] : ngram_counts(pair.candidate, k)) {
        const auto it = clip.find(gram);
        matched[static_cast<std::size_t>(k - 1)] +=
            it == clip.end() ? 0 : std::min(count, it->second);
        possible[static_cast<std::size_t>(k - 1)] += count;
      }
    }
  }

  if (cand_total == 0) return 0.0;
  double log_precision = 0.0;
  for (int k = 0; k < n; ++k) {
    const auto idx = static_cast<std::size_t>(k);
    if (matched[idx] == 0 || possible[idx] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matched[idx]) /
                              static_cast<double>(possible[idx])) /
                     static_cast<double>(n);
  }
  const double bp = cand_total > ref_total
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_total) /
                                             static_cast<double>(cand_total));
  return bp * std::exp(log_precision);
}

double rouge_l(const std::vector<EvalPair>& pairs) {
  validate_pairs(pairs);
  constexpr double kBetaSq = 1.2 * 1.2;
  double total = 0.0;
  for (const auto& pair : pairs) {
    double best = 0.0;
    for (const auto& ref : pair.references) {
      if (pair.candidate.empty() || ref.empty()) continue;
      const double lcs = lcs_length(pair.candidate, ref);
      const double precision = lcs / static_cast<double>(pair.candidate.size());
      const double recall = lcs / static_cast<double>(ref.size());
      const double denom = recall + kBetaSq * precision;
      if (denom > 0.0) {
        best = std::max(best, (1.0 + kBetaSq) * recall * precision / denom);
      }
    }
    total += best;
  }
  return total / static_cast<double>(pairs.size());
}

CorpusStats reference_stats(const std::vector<EvalPair>& pairs) {
  validate_pairs(pairs);
  CorpusStats stats;
  stats.num_videos = static_cast<int>(pairs.size());
  for (const auto& pair : pairs) {
    for (int k = 1; k <= 4; ++k) {
      std::unordered_set<std::string> seen;
      for (const auto& ref : pair.references) {
        for (const auto& [gram, count] : ngram_counts(ref, k)) seen.insert(gram);
      }
      for (const auto& gram : seen) ++stats.doc_freq[static_cast<std::size_t>(k - 1)][gram];
    }
  }
  return stats;
}

double cider(const std::vector<EvalPair>& pairs, const CorpusStats& stats) {
  validate_pairs(pairs);
  if (stats.num_videos < 1) throw InputError("corpus statistics cover no videos");

  double total = 0.0;
  for (int n = 1; n <= 4; ++n) {
    double order_sum = 0.0;
    for (const auto& pair : pairs) {
      const WeightedVector cand = tf_idf(pair.candidate, n, stats);
      double ref_sum = 0.0;
      for (const auto& ref : pair.references) {
        ref_sum += cosine(cand, tf_idf(ref, n, stats));
      }
      order_sum += ref_sum / static_cast<double>(pair.references.size());
    }
    total += order_sum / static_cast<double>(pairs.size());
  }
  return 10.0 * total / 4.0;
}

std::vector<std::pair<std::string, double>> score_all(const std::vector<EvalPair>& pairs) {
  std::vector<std::pair<std::string, double>> scores;
  for (int n = 1; n <= 4; ++n) {
    scores.emplace_back("BLEU@" + std::to_string(n), bleu(pairs, n));
  }
  scores.emplace_back("CIDEr", cider(pairs, reference_stats(pairs)));
  scores.emplace_back("ROUGE-L", rouge_l(pairs));
  return scores;
}

std::string format_report_line(const std::string& name, double score) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", score * 100.0);
  return name + "\t" + buf;
}

std::string format_report(const std::vector<std::pair<std::string, double>>& scores) {
  std::string out;
  for (const auto& [name, score] : scores) {
    out += format_report_line(name, score);
    out += '\n';
  }
  return out;
}

}  // namespace resicap::metrics
