#include "buglistener/augmentor.hpp"

#include <algorithm>
#include <cmath>

#include "buglistener/text.hpp"

namespace bl {

Thesaurus Thesaurus::load(const std::filesystem::path& file) {
  Thesaurus t;
  for (const auto& line : read_lines(file)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) continue;
    std::string word = line.substr(0, tab);
    std::vector<std::string> syns;
    std::size_t pos = tab + 1;
    while (pos <= line.size()) {
      auto comma = line.find(',', pos);
      auto end = comma == std::string::npos ? line.size() : comma;
      if (end > pos) syns.push_back(line.substr(pos, end - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!syns.empty()) t.table_[word] = std::move(syns);
  }
  return t;
}

const std::vector<std::string>* Thesaurus::synonyms(
    const std::string& word) const {
  auto it = table_.find(word);
  return it == table_.end() ? nullptr : &it->second;
}

std::vector<std::string> build_short_pool(const std::vector<Dialog>& corpus,
                                          int theta) {
  std::vector<std::string> pool;
  for (const auto& d : corpus)
    for (const auto& u : d.utterances) {
      auto tokens = split_ws(u.text);
      if (!tokens.empty() && static_cast<int>(tokens.size()) < theta)
        pool.push_back(u.text);
    }
  return pool;
}

namespace {

text::PlaceholderSet placeholders_of(const std::vector<std::string>& tokens) {
  text::PlaceholderSet ps;
  for (const auto& t : tokens)
    if (auto p = text::parse_placeholder_token(t)) ps.insert(*p);
  return ps;
}

// replaces ceil(rate * eligible) tokens with synonyms, in place
bool synonym_replace(std::vector<std::string>& tokens, const Thesaurus& thes,
                     double rate, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (text::is_placeholder_token(tokens[i])) continue;
    if (thes.synonyms(tokens[i])) eligible.push_back(i);
  }
  if (eligible.empty()) return false;
  std::size_t n_replace = static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(eligible.size())));
  n_replace = std::max<std::size_t>(1, std::min(n_replace, eligible.size()));
  std::shuffle(eligible.begin(), eligible.end(), rng);
  for (std::size_t k = 0; k < n_replace; ++k) {
    const auto& syns = *thes.synonyms(tokens[eligible[k]]);
    std::uniform_int_distribution<std::size_t> pick(0, syns.size() - 1);
    tokens[eligible[k]] = syns[pick(rng)];
  }
  return true;
}

}  // namespace

Utterance mutate_utterance(const Utterance& u, const AugmentConfig& cfg,
                           const Thesaurus& thesaurus,
                           const std::vector<std::string>& short_pool,
                           Rng& rng) {
  Utterance out = u;
  auto tokens = split_ws(u.text);
  if (static_cast<int>(tokens.size()) <= cfg.theta) {
    if (short_pool.empty())
      fail(ErrorCode::kConfig,
           "short-utterance pool is empty but a replacement is required");
    std::uniform_int_distribution<std::size_t> pick(0, short_pool.size() - 1);
    out.text = short_pool[pick(rng)];
    out.raw_text = out.text;
    out.placeholders = placeholders_of(split_ws(out.text));
  } else {
    synonym_replace(tokens, thesaurus, cfg.sr_rate, rng);
    out.text = join(tokens);
    out.raw_text = out.text;
    out.placeholders = placeholders_of(tokens);
  }
  return out;
}

std::vector<Dialog> augment_dialog(const Dialog& d, const AugmentConfig& cfg,
                                   const Thesaurus& thesaurus,
                                   const std::vector<std::string>& short_pool) {
  std::vector<Dialog> mutants;
  for (int m = 0; m < cfg.n_mutants; ++m) {
    Rng rng(derive_seed(cfg.rng_seed, d.id, static_cast<std::uint64_t>(m)));
    Dialog mut = d;
    mut.id = d.id + "-aug" + std::to_string(m);
    mut.augmented_from = d.augmented_from ? *d.augmented_from : d.id;
    for (auto& u : mut.utterances)
      u = mutate_utterance(u, cfg, thesaurus, short_pool, rng);
    mutants.push_back(std::move(mut));
  }
  return mutants;
}

std::vector<Dialog> balance_bri(const std::vector<Dialog>& project_dialogs,
                                const AugmentConfig& cfg,
                                const Thesaurus& thesaurus,
                                const std::vector<std::string>& short_pool) {
  std::vector<const Dialog*> br, nbr;
  for (const auto& d : project_dialogs) {
    if (!d.label)
      fail(ErrorCode::kValidation, "unlabeled dialog in training data: " + d.id);
    (*d.label == DialogLabel::kBr ? br : nbr).push_back(&d);
  }
  if (br.empty() || nbr.empty())
    fail(ErrorCode::kValidation,
         "balancing requires both BR and NBR dialogs in every project");

  std::vector<Dialog> out = project_dialogs;
  AugmentConfig one = cfg;
  one.n_mutants = 1;

  auto grow = [&](const std::vector<const Dialog*>& originals,
                  std::size_t extra, const char* tag) {
    for (std::size_t k = 0; k < extra; ++k) {
      const Dialog& src = *originals[k % originals.size()];
      std::uint64_t round = k / originals.size();
      Rng rng(derive_seed(cfg.rng_seed, src.id + tag, round));
      Dialog mut = src;
      mut.id = src.id + "-" + tag + std::to_string(round);
      mut.augmented_from = src.id;
      for (auto& u : mut.utterances)
        u = mutate_utterance(u, one, thesaurus, short_pool, rng);
      out.push_back(std::move(mut));
    }
  };

  std::size_t nbr_target = nbr.size() * static_cast<std::size_t>(
                                            std::max(1, cfg.nbr_multiplier));
  // keep classes equal even when BR already exceeds the grown NBR side
  std::size_t target = std::max(nbr_target, br.size());
  grow(nbr, target - nbr.size(), "aug");
  grow(br, target - br.size(), "aug");
  return out;
}

namespace {

std::vector<std::string> eda_mutate(const std::vector<std::string>& tokens,
                                    const Thesaurus& thes, double rate,
                                    Rng& rng) {
  std::vector<std::string> out = tokens;
  std::uniform_int_distribution<int> op_pick(0, 3);
  int op = op_pick(rng);
  std::size_t n =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(
                                   rate * static_cast<double>(out.size()))));
  switch (op) {
    case 0:  // synonym replacement
      synonym_replace(out, thes, rate, rng);
      break;
    case 1: {  // random insertion of a synonym
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<std::size_t> sources;
        for (std::size_t i = 0; i < out.size(); ++i)
          if (!text::is_placeholder_token(out[i]) && thes.synonyms(out[i]))
            sources.push_back(i);
        if (sources.empty()) break;
        std::uniform_int_distribution<std::size_t> src_pick(0, sources.size() - 1);
        const auto& syns = *thes.synonyms(out[sources[src_pick(rng)]]);
        std::uniform_int_distribution<std::size_t> syn_pick(0, syns.size() - 1);
        std::uniform_int_distribution<std::size_t> pos_pick(0, out.size());
        out.insert(out.begin() + static_cast<long>(pos_pick(rng)),
                   syns[syn_pick(rng)]);
      }
      break;
    }
    case 2: {  // random swap
      if (out.size() >= 2) {
        std::uniform_int_distribution<std::size_t> pos(0, out.size() - 1);
        for (std::size_t k = 0; k < n; ++k)
          std::swap(out[pos(rng)], out[pos(rng)]);
      }
      break;
    }
    case 3: {  // random deletion
      std::uniform_real_distribution<double> uni(0.0, 1.0);
      std::vector<std::string> kept;
      for (auto& t : out)
        if (uni(rng) >= rate) kept.push_back(std::move(t));
      if (kept.empty() && !out.empty()) {
        std::uniform_int_distribution<std::size_t> pos(0, out.size() - 1);
        kept.push_back(out[pos(rng)]);
      }
      out = std::move(kept);
      break;
    }
  }
  return out;
}

}  // namespace

std::map<std::string, std::vector<EdaSentence>> augment_sentences_eda(
    const std::map<std::string, std::vector<std::string>>& by_class,
    const Thesaurus& thesaurus, std::uint64_t seed, double rate) {
  std::size_t target = 0;
  for (const auto& [label, sentences] : by_class) {
    if (sentences.empty())
      fail(ErrorCode::kValidation,
           "cannot balance: class '" + label + "' has no sentences");
    target = std::max(target, sentences.size());
  }
  std::map<std::string, std::vector<EdaSentence>> out;
  for (const auto& [label, sentences] : by_class) {
    auto& bucket = out[label];
    for (const auto& s : sentences) bucket.push_back({s, {}});
    std::size_t k = 0;
    while (bucket.size() < target) {
      const std::string& src = sentences[k % sentences.size()];
      Rng rng(derive_seed(seed, label + "/" + src, k));
      auto tokens = eda_mutate(split_ws(src), thesaurus, rate, rng);
      bucket.push_back({join(tokens), src});
      ++k;
    }
  }
  return out;
}

}  // namespace bl
