#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "resicap/errors.hpp"

namespace resicap::metrics {

// One evaluated video: a candidate caption and its reference captions, all as
// token sequences with the special tokens already stripped.
struct EvalPair {
  std::vector<std::string> candidate;
  std::vector<std::vector<std::string>> references;  // at least one
};

// Corpus-level BLEU@n: clipped modified n-gram precision with uniform 1/n
// weights, geometric mean, and a brevity penalty computed from the closest
// reference length per pair (ties go to the shorter reference). No smoothing:
// a zero precision at any order zeroes the score.
double bleu(const std::vector<EvalPair>& pairs, int n);

// ROUGE-L: LCS-based F-measure with beta = 1.2, maximized over each pair's
// references and averaged over the corpus.
double rouge_l(const std::vector<EvalPair>& pairs);

// Document frequencies over the reference corpus: doc_freq[k-1][gram] counts
// the videos whose reference set contains the space-joined k-gram at least
// once.
struct CorpusStats {
  int num_videos = 0;
  std::array<std::unordered_map<std::string, int>, 4> doc_freq;
};

CorpusStats reference_stats(const std::vector<EvalPair>& pairs);

// CIDEr: tf-idf weighted n-gram cosine similarity, averaged over each video's
// references, over the corpus, and over n = 1..4, then scaled by 10. The idf
// of gram g is ln(num_videos / max(1, df(g))).
double cider(const std::vector<EvalPair>& pairs, const CorpusStats& stats);

// All computed metrics in reporting column order: BLEU@1..4, CIDEr, ROUGE-L.
// (METEOR sits between BLEU@4 and CIDEr in the tables but is not computed;
// table writers fill its column with "-".)
std::vector<std::pair<std::string, double>> score_all(const std::vector<EvalPair>& pairs);

// "name<TAB>percentage" with one decimal, e.g. "BLEU@4\t41.3". Every score is
// multiplied by 100, including CIDEr (whose native scale is already 10x the
// mean cosine, so its percentages can exceed 100).
std::string format_report_line(const std::string& name, double score);

// One report line per (name, score), each terminated by a newline.
std::string format_report(const std::vector<std::pair<std::string, double>>& scores);

}  // namespace resicap::metrics
