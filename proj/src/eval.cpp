#include "buglistener/eval.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace bl {

using nlohmann::ordered_json;

MetricReport compute_metrics(const std::vector<std::string>& preds,
                             const std::vector<std::string>& gold) {
  if (preds.size() != gold.size())
    fail(ErrorCode::kInvalidArgument,
         "metric inputs differ in length: " + std::to_string(preds.size()) +
             " vs " + std::to_string(gold.size()));
  MetricReport report;
  report.total = static_cast<long>(gold.size());

  std::set<std::string> classes(gold.begin(), gold.end());
  classes.insert(preds.begin(), preds.end());

  long correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i)
    if (preds[i] == gold[i]) ++correct;
  report.accuracy =
      gold.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(gold.size());

  for (const auto& cls : classes) {
    ClassMetrics m;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      bool p = preds[i] == cls, g = gold[i] == cls;
      if (p && g) ++m.tp;
      else if (p) ++m.fp;
      else if (g) ++m.fn;
    }
    m.support = m.tp + m.fn;
    if (m.tp + m.fp > 0)
      m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
    else
      m.degenerate = true;
    if (m.tp + m.fn > 0)
      m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    else
      m.degenerate = true;
    if (m.precision + m.recall > 0.0)
      m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    report.any_degenerate = report.any_degenerate || m.degenerate;
    report.per_class.emplace(cls, m);
  }

  if (!report.per_class.empty()) {
    for (const auto& [cls, m] : report.per_class) {
      report.macro_precision += m.precision;
      report.macro_recall += m.recall;
      report.macro_f1 += m.f1;
    }
    double n = static_cast<double>(report.per_class.size());
    report.macro_precision /= n;
    report.macro_recall /= n;
    report.macro_f1 /= n;
  }
  return report;
}

std::string metric_report_to_json(const MetricReport& report) {
  ordered_json j;
  ordered_json per_class = ordered_json::object();
  for (const auto& [cls, m] : report.per_class) {
    ordered_json c;
    c["precision"] = m.precision;
    c["recall"] = m.recall;
    c["f1"] = m.f1;
    c["support"] = m.support;
    c["tp"] = m.tp;
    c["fp"] = m.fp;
    c["fn"] = m.fn;
    if (m.degenerate) c["degenerate"] = true;
    per_class[cls] = std::move(c);
  }
  j["per_class"] = std::move(per_class);
  j["macro"] = {{"precision", report.macro_precision},
                {"recall", report.macro_recall},
                {"f1", report.macro_f1}};
  j["accuracy"] = report.accuracy;
  j["total"] = report.total;
  if (report.any_degenerate) j["degenerate"] = true;
  return j.dump(2);
}

std::string metric_report_table(const MetricReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %8s\n", "class",
                "precision", "recall", "f1", "support");
  out << line;
  for (const auto& [cls, m] : report.per_class) {
    std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %10.4f %8ld\n",
                  cls.c_str(), m.precision, m.recall, m.f1, m.support);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %10.4f %8ld\n", "macro",
                report.macro_precision, report.macro_recall, report.macro_f1,
                report.total);
  out << line;
  return out.str();
}

std::vector<CrossProjectFold> cross_project_split(
    const std::vector<Dialog>& dialogs) {
  // root project: augmented dialogs inherit their source's placement
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < dialogs.size(); ++i) by_id[dialogs[i].id] = i;

  auto project_of = [&](std::size_t i) -> const std::string& {
    const Dialog* d = &dialogs[i];
    while (d->augmented_from) {
      auto it = by_id.find(*d->augmented_from);
      if (it == by_id.end()) break;
      d = &dialogs[it->second];
    }
    return d->project;
  };

  std::set<std::string> projects;
  for (std::size_t i = 0; i < dialogs.size(); ++i) {
    if (project_of(i).empty())
      fail(ErrorCode::kValidation,
           "dialog " + dialogs[i].id + " has no project tag");
    projects.insert(project_of(i));
  }
  if (projects.size() < 2)
    fail(ErrorCode::kValidation,
         "cross-project evaluation needs at least two projects");

  std::vector<CrossProjectFold> folds;
  for (const auto& p : projects) {
    CrossProjectFold fold;
    fold.test_project = p;
    for (std::size_t i = 0; i < dialogs.size(); ++i)
      (project_of(i) == p ? fold.test : fold.train).push_back(i);
    folds.push_back(std::move(fold));
  }
  return folds;
}

std::vector<std::vector<std::size_t>> kfold_split(
    const std::vector<std::string>& root_ids, int k, std::uint64_t seed) {
  if (k < 2) fail(ErrorCode::kInvalidArgument, "k must be at least 2");
  // group indices by root so augmented items follow their source
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < root_ids.size(); ++i)
    groups[root_ids[i]].push_back(i);

  std::vector<std::string> roots;
  roots.reserve(groups.size());
  for (const auto& [root, members] : groups) roots.push_back(root);
  Rng rng(derive_seed(seed, "kfold"));
  std::shuffle(roots.begin(), roots.end(), rng);

  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  std::size_t f = 0;
  for (const auto& root : roots) {
    for (auto idx : groups[root])
      folds[f % static_cast<std::size_t>(k)].push_back(idx);
    ++f;
  }
  for (auto& fold : folds) std::sort(fold.begin(), fold.end());
  return folds;
}

}  // namespace bl
