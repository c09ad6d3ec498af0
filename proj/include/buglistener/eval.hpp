#pragma once

#include <map>
#include <string>
#include <vector>

#include "buglistener/corpus.hpp"

namespace bl {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
  long tp = 0, fp = 0, fn = 0;
  bool degenerate = false;  // a zero denominator was coerced to 0
};

struct MetricReport {
  std::map<std::string, ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  long total = 0;
  bool any_degenerate = false;
};

// Per-class and macro precision/recall/F1 over aligned label sequences.
// Classes are the union of gold and predicted labels. Zero denominators
// yield 0 with the degenerate flag set.
MetricReport compute_metrics(const std::vector<std::string>& preds,
                             const std::vector<std::string>& gold);

std::string metric_report_to_json(const MetricReport& report);

// Plain-text table: one row per class plus the macro row.
std::string metric_report_table(const MetricReport& report);

struct CrossProjectFold {
  std::string test_project;
  std::vector<std::size_t> train;  // indices into the input dialog list
  std::vector<std::size_t> test;
};

// Leave-one-project-out folds, one per project, ordered by project name.
// Augmented dialogs always land on the same side as their source.
std::vector<CrossProjectFold> cross_project_split(
    const std::vector<Dialog>& dialogs);

// k near-equal folds of sentence indices. Items sharing a root (augmented
// sentences and their source) stay in the same fold.
std::vector<std::vector<std::size_t>> kfold_split(
    const std::vector<std::string>& root_ids, int k, std::uint64_t seed);

}  // namespace bl
