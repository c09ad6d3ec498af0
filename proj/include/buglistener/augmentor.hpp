#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "buglistener/corpus.hpp"

namespace bl {

struct AugmentConfig {
  int theta = 5;           // utterance length threshold
  int n_mutants = 1;       // mutants per dialog
  std::uint64_t rng_seed = 0;
  int nbr_multiplier = 8;  // NBR growth factor before BR catches up
  double sr_rate = 0.1;    // fraction of eligible tokens replaced
};

class Thesaurus {
 public:
  static Thesaurus load(const std::filesystem::path& file);
  const std::vector<std::string>* synonyms(const std::string& word) const;
  bool empty() const { return table_.empty(); }

 private:
  std::unordered_map<std::string, std::vector<std::string>> table_;
};

// Texts of utterances shorter than theta tokens, used for whole-utterance
// replacement of short inputs.
std::vector<std::string> build_short_pool(const std::vector<Dialog>& corpus,
                                          int theta);

// Short utterances are swapped for a random pool member; longer ones get
// synonym replacement on non-placeholder tokens, token count preserved.
// Timestamp, author, role and id are untouched.
Utterance mutate_utterance(const Utterance& u, const AugmentConfig& cfg,
                           const Thesaurus& thesaurus,
                           const std::vector<std::string>& short_pool,
                           Rng& rng);

// N structure-preserving mutants: same utterance count, roles, reply links
// and label; mutant ids derive from the source id.
std::vector<Dialog> augment_dialog(const Dialog& d, const AugmentConfig& cfg,
                                   const Thesaurus& thesaurus,
                                   const std::vector<std::string>& short_pool);

// Per-project balancing: NBR dialogs grow by cfg.nbr_multiplier, then BR
// dialogs grow to match. Originals are retained, mutants appended.
std::vector<Dialog> balance_bri(const std::vector<Dialog>& project_dialogs,
                                const AugmentConfig& cfg,
                                const Thesaurus& thesaurus,
                                const std::vector<std::string>& short_pool);

struct EdaSentence {
  std::string text;
  std::string augmented_from;  // empty for originals
};

// EDA over per-class sentence lists: synonym replacement, random insertion,
// random swap, random deletion, chosen uniformly, until every class matches
// the largest original count.
std::map<std::string, std::vector<EdaSentence>> augment_sentences_eda(
    const std::map<std::string, std::vector<std::string>>& by_class,
    const Thesaurus& thesaurus, std::uint64_t seed, double rate = 0.1);

}  // namespace bl
