#include "dawgen/task.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>

#include "dawgen/error.hpp"

namespace dawgen {

namespace {

// Canonical representative of a token's synonym class (lower id wins).
int canon(int id, const Vocabulary& v) {
  int s = v.synonym_of(id);
  return s < 0 ? id : std::min(id, s);
}

std::map<int, int> canon_counts(const std::vector<int>& s, const Vocabulary& v) {
  std::map<int, int> m;
  for (int t : s) ++m[canon(t, v)];
  return m;
}

std::map<int, int> content_canon_counts(const std::vector<int>& s, const Vocabulary& v) {
  std::map<int, int> m;
  for (int t : s)
    if (v.synonym_of(t) >= 0) ++m[canon(t, v)];
  return m;
}

// Minimal number of synonym swaps turning the multiset of s1 into that of s2.
// Only meaningful when the canonical multisets already match.
int substitution_count(const std::vector<int>& s1, const std::vector<int>& s2,
                       const Vocabulary& v) {
  std::map<int, int> low1, low2;
  for (int t : s1)
    if (int p = v.synonym_of(t); p >= 0 && t < p) ++low1[t];
  for (int t : s2)
    if (int p = v.synonym_of(t); p >= 0 && t < p) ++low2[t];
  std::set<int> keys;
  for (auto& [k, n] : low1) keys.insert(k);
  for (auto& [k, n] : low2) keys.insert(k);
  int subs = 0;
  for (int k : keys) {
    auto a = low1.find(k), b = low2.find(k);
    subs += std::abs((a == low1.end() ? 0 : a->second) -
                     (b == low2.end() ? 0 : b->second));
  }
  return subs;
}

bool cross_antonym(const std::vector<int>& s1, const std::vector<int>& s2,
                   const Vocabulary& v) {
  for (int a : s1) {
    if (v.antonym_group(a).empty()) continue;
    for (int b : s2)
      if (v.antonym(a, b)) return true;
  }
  return false;
}

// True when every content word of `sub` is covered by `super`, up to synonyms.
bool content_subset(const std::vector<int>& sub, const std::vector<int>& super,
                    const Vocabulary& v) {
  auto need = content_canon_counts(sub, v);
  auto have = content_canon_counts(super, v);
  for (auto& [k, n] : need) {
    auto it = have.find(k);
    if (it == have.end() || it->second < n) return false;
  }
  return true;
}

// --- toy grammar -----------------------------------------------------------

struct Clause {
  int subj, verb, adj, place;  // adj may be -1
};

int pick(const std::vector<int>& pool, Rng& rng) {
  return pool[rng.uniform_int(pool.size())];
}

Clause sample_clause(const Vocabulary& v, Rng& rng) {
  Clause c;
  c.subj = pick(v.subjects(), rng);
  c.verb = pick(v.verbs(), rng);
  c.adj = rng.uniform() < 0.8 ? pick(v.adjectives(), rng) : -1;
  c.place = pick(v.places(), rng);
  return c;
}

std::vector<int> render_clauses(const std::vector<Clause>& cs, const Vocabulary& v) {
  std::vector<int> out;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (i > 0) out.push_back(v.id("and"));
    out.push_back(cs[i].subj);
    out.push_back(cs[i].verb);
    if (cs[i].adj >= 0) out.push_back(cs[i].adj);
    out.push_back(cs[i].place);
  }
  return out;
}

bool internal_antonym(const std::vector<int>& s, const Vocabulary& v) {
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = i + 1; j < s.size(); ++j)
      if (v.antonym(s[i], s[j])) return true;
  return false;
}

std::vector<Clause> sample_clauses(const Vocabulary& v, Rng& rng, double two_clause_p) {
  for (;;) {
    std::vector<Clause> cs;
    cs.push_back(sample_clause(v, rng));
    if (rng.uniform() < two_clause_p) cs.push_back(sample_clause(v, rng));
    if (!internal_antonym(render_clauses(cs, v), v)) return cs;
  }
}

// Slot positions that hold a content word, for in-place edits.
struct Slot {
  int clause;
  int field;  // 0 subj, 1 verb, 2 adj, 3 place
};

std::vector<Slot> content_slots(const std::vector<Clause>& cs) {
  std::vector<Slot> out;
  for (int i = 0; i < static_cast<int>(cs.size()); ++i) {
    out.push_back({i, 0});
    out.push_back({i, 1});
    if (cs[i].adj >= 0) out.push_back({i, 2});
    out.push_back({i, 3});
  }
  return out;
}

int& slot_ref(std::vector<Clause>& cs, const Slot& s) {
  Clause& c = cs[s.clause];
  switch (s.field) {
    case 0: return c.subj;
    case 1: return c.verb;
    case 2: return c.adj;
    default: return c.place;
  }
}

void apply_synonym_subs(std::vector<Clause>& cs, int count, const Vocabulary& v,
                        Rng& rng) {
  auto slots = content_slots(cs);
  rng.shuffle(slots);
  count = std::min<int>(count, slots.size());
  for (int i = 0; i < count; ++i) {
    int& tok = slot_ref(cs, slots[i]);
    tok = v.synonym_of(tok);
  }
}

// --- per-class example generators ------------------------------------------

Example draw_paraphrase(int label, const Vocabulary& v, Rng& rng) {
  auto cs = sample_clauses(v, rng, 0.3);
  Example ex;
  ex.label = label;
  ex.s1 = render_clauses(cs, v);
  if (label == 0) {
    auto out = cs;
    if (out.size() == 2 && rng.uniform() < 0.5) std::swap(out[0], out[1]);
    apply_synonym_subs(out, rng.uniform_int(3), v, rng);
    ex.s2 = render_clauses(out, v);
    return ex;
  }
  double u = rng.uniform();
  if (u < 0.5) {
    ex.s2 = render_clauses(sample_clauses(v, rng, 0.3), v);
  } else if (u < 0.8) {
    // keep the shape, break the multiset with one non-synonym replacement
    auto out = cs;
    auto slots = content_slots(out);
    const Slot& s = slots[rng.uniform_int(slots.size())];
    const std::vector<int>* pool = nullptr;
    switch (s.field) {
      case 0: pool = &v.subjects(); break;
      case 1: pool = &v.verbs(); break;
      case 2: pool = &v.adjectives(); break;
      default: pool = &v.places(); break;
    }
    int& tok = slot_ref(out, s);
    int old = canon(tok, v);
    do tok = pick(*pool, rng);
    while (canon(tok, v) == old);
    apply_synonym_subs(out, rng.uniform_int(2), v, rng);
    ex.s2 = render_clauses(out, v);
  } else {
    // same meaning class but swapped too far: three synonym substitutions
    auto out = cs;
    if (out.size() == 2 && rng.uniform() < 0.5) std::swap(out[0], out[1]);
    apply_synonym_subs(out, 3, v, rng);
    ex.s2 = render_clauses(out, v);
  }
  return ex;
}

Example draw_nli(int label, const Vocabulary& v, Rng& rng) {
  Example ex;
  ex.label = label;
  if (label == 0) {  // entailment: drop material, keep the rest up to synonyms
    auto cs = sample_clauses(v, rng, 0.5);
    ex.s1 = render_clauses(cs, v);
    auto out = cs;
    if (out.size() == 2 && rng.uniform() < 0.6)
      out.erase(out.begin() + rng.uniform_int(2));
    for (auto& c : out)
      if (c.adj >= 0 && rng.uniform() < 0.5) c.adj = -1;
    if (out.size() == 2 && rng.uniform() < 0.5) std::swap(out[0], out[1]);
    apply_synonym_subs(out, rng.uniform_int(3), v, rng);
    ex.s2 = render_clauses(out, v);
    return ex;
  }
  if (label == 2) {  // contradiction: flip one word to an antonym
    for (;;) {
      auto cs = sample_clauses(v, rng, 0.3);
      auto out = cs;
      apply_synonym_subs(out, rng.uniform_int(2), v, rng);
      auto slots = content_slots(out);
      rng.shuffle(slots);
      bool flipped = false;
      for (const Slot& s : slots) {
        int& tok = slot_ref(out, s);
        const auto& group = v.antonym_group(tok);
        if (group.empty()) continue;
        tok = group[rng.uniform_int(group.size())];
        flipped = true;
        break;
      }
      if (!flipped) continue;
      ex.s1 = render_clauses(cs, v);
      ex.s2 = render_clauses(out, v);
      return ex;
    }
  }
  // neutral: unrelated, or same subject doing something else
  auto cs = sample_clauses(v, rng, 0.3);
  ex.s1 = render_clauses(cs, v);
  if (rng.uniform() < 0.5) {
    ex.s2 = render_clauses(sample_clauses(v, rng, 0.3), v);
  } else {
    auto out = sample_clauses(v, rng, 0.0);
    out[0].subj = cs[0].subj;
    ex.s2 = render_clauses(out, v);
  }
  return ex;
}

Example make_example(const TaskSpec& spec, const Vocabulary& v, int label, Rng& rng) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Example ex = spec.name == "toy-paraphrase" ? draw_paraphrase(label, v, rng)
                                               : draw_nli(label, v, rng);
    if (oracle_label(ex.s1, ex.s2, spec, v) == label) return ex;
  }
  throw Error("make_example: could not hit class " + std::to_string(label) +
              " for task " + spec.name);
}

std::vector<int> word_ids(const std::vector<std::string>& words, const Vocabulary& v) {
  std::vector<int> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(v.id(w));
  return out;
}

void append(std::vector<int>& dst, const std::vector<int>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

}  // namespace

TaskSpec TaskSpec::named(const std::string& name) {
  TaskSpec t;
  t.name = name;
  if (name == "toy-paraphrase") {
    t.num_classes = 2;
    t.verbalizers = {"yes", "no"};
    t.cls_prefix = {"are", "first"};
    t.cls_mid = {"second"};
    t.cls_suffix = {"equivalent", "?"};
    t.cond_prefix = {{"pair", "equivalent", "first"}, {"pair", "different", "first"}};
    t.cond_cue = {"second"};
  } else if (name == "toy-nli") {
    t.num_classes = 3;
    t.verbalizers = {"yes", "maybe", "no"};
    t.cls_prefix = {"premise"};
    t.cls_mid = {"hypothesis"};
    t.cls_suffix = {"answer"};
    t.cond_prefix = {{"pair", "implies", "first"},
                     {"pair", "neutral", "first"},
                     {"pair", "contradicts", "first"}};
    t.cond_cue = {"second"};
  } else {
    throw Error("unknown task: " + name);
  }
  return t;
}

int oracle_label(const std::vector<int>& s1, const std::vector<int>& s2,
                 const TaskSpec& spec, const Vocabulary& vocab) {
  if (spec.name == "toy-paraphrase") {
    if (canon_counts(s1, vocab) != canon_counts(s2, vocab)) return 1;
    return substitution_count(s1, s2, vocab) <= 2 ? 0 : 1;
  }
  if (spec.name == "toy-nli") {
    if (cross_antonym(s1, s2, vocab)) return 2;
    if (content_subset(s2, s1, vocab)) return 0;
    return 1;
  }
  throw Error("oracle_label: unknown task " + spec.name);
}

std::vector<int> sample_s1(const Vocabulary& vocab, Rng& rng) {
  return render_clauses(sample_clauses(vocab, rng, 0.3), vocab);
}

SplitSet build_task(const TaskSpec& spec, std::uint64_t seed, int test_per_class,
                    int dev_per_class, int pool_per_class) {
  const Vocabulary& v = Vocabulary::toy();
  Rng rng(derive_seed(seed, "task-build"));
  SplitSet out;
  out.seed = seed;
  std::set<std::pair<std::vector<int>, std::vector<int>>> seen;

  auto fill = [&](std::vector<Example>& split, int per_class) {
    for (int label = 0; label < spec.num_classes; ++label) {
      int have = 0;
      while (have < per_class) {
        Example ex = make_example(spec, v, label, rng);
        if (!seen.insert({ex.s1, ex.s2}).second) continue;
        split.push_back(std::move(ex));
        ++have;
      }
    }
    rng.shuffle(split);
  };
  fill(out.test, test_per_class);
  fill(out.dev, dev_per_class);
  fill(out.train_pool, pool_per_class);
  return out;
}

std::vector<Example> sample_few_shot(const std::vector<Example>& pool,
                                     int shots_per_class, int num_classes,
                                     std::uint64_t seed) {
  Rng rng(derive_seed(seed, "few-shot"));
  std::vector<Example> out;
  for (int label = 0; label < num_classes; ++label) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(pool.size()); ++i)
      if (pool[i].label == label) idx.push_back(i);
    if (static_cast<int>(idx.size()) < shots_per_class)
      throw Error("sample_few_shot: pool has too few examples of class " +
                  std::to_string(label));
    for (int j : rng.sample_without_replacement(idx.size(), shots_per_class))
      out.push_back(pool[idx[j]]);
  }
  rng.shuffle(out);
  return out;
}

std::vector<int> render_classification(const Example& ex, const TaskSpec& spec,
                                       const Vocabulary& vocab, int max_len) {
  std::vector<int> out = word_ids(spec.cls_prefix, vocab);
  append(out, ex.s1);
  append(out, word_ids(spec.cls_mid, vocab));
  append(out, ex.s2);
  append(out, word_ids(spec.cls_suffix, vocab));
  out.push_back(vocab.mask_id());
  if (static_cast<int>(out.size()) > max_len)
    throw Error("render_classification: sequence exceeds max length");
  return out;
}

std::vector<int> render_conditional(int label, const std::vector<int>& s1,
                                    const TaskSpec& spec, const Vocabulary& vocab,
                                    int max_len) {
  if (label < 0 || label >= spec.num_classes)
    throw Error("render_conditional: label out of range");
  std::vector<int> out = word_ids(spec.cond_prefix[label], vocab);
  append(out, s1);
  append(out, word_ids(spec.cond_cue, vocab));
  if (static_cast<int>(out.size()) > max_len)
    throw Error("render_conditional: sequence exceeds max length");
  return out;
}

std::vector<int> verbalizer_ids(const TaskSpec& spec, const Vocabulary& vocab) {
  return word_ids(spec.verbalizers, vocab);
}

std::vector<std::vector<int>> make_pretrain_corpus(const TaskSpec& spec,
                                                   const Vocabulary& vocab,
                                                   int count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "pretrain-corpus"));
  std::vector<std::vector<int>> docs;
  docs.reserve(count);
  auto vids = verbalizer_ids(spec, vocab);
  for (int i = 0; i < count; ++i) {
    double u = rng.uniform();
    std::vector<int> doc;
    if (u < 0.35) {
      doc = sample_s1(vocab, rng);
    } else {
      int label = static_cast<int>(rng.uniform_int(spec.num_classes));
      Example ex = make_example(spec, vocab, label, rng);
      if (u < 0.90) {
        doc = render_conditional(label, ex.s1, spec, vocab);
        append(doc, ex.s2);
      } else {
        doc = render_classification(ex, spec, vocab);
        doc.back() = vids[label];  // answer instead of the mask slot
      }
    }
    doc.push_back(vocab.eos_id());
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace dawgen
