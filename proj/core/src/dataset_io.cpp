#include "dawgen/dataset_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dawgen/error.hpp"

namespace dawgen {

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += vocab.token(ids[i]);
  }
  return out;
}

std::vector<int> tokenize(const std::string& text, const Vocabulary& vocab) {
  std::vector<int> out;
  std::istringstream ss(text);
  std::string word;
  while (ss >> word) out.push_back(vocab.id(word));
  return out;
}

void write_examples_jsonl(const std::string& path,
                          const std::vector<Example>& examples,
                          const TaskSpec& spec, const Vocabulary& vocab) {
  std::ofstream f(path);
  if (!f) throw Error("cannot open for writing: " + path);
  for (const Example& ex : examples) {
    if (ex.label < 0 || ex.label >= spec.num_classes)
      throw Error("write_examples_jsonl: label out of range");
    nlohmann::ordered_json j;
    j["s1"] = detokenize(ex.s1, vocab);
    j["s2"] = detokenize(ex.s2, vocab);
    j["label"] = spec.verbalizers[ex.label];
    f << j.dump() << '\n';
  }
  if (!f) throw Error("write failed: " + path);
}

std::vector<Example> read_examples_jsonl(const std::string& path,
                                         const TaskSpec& spec,
                                         const Vocabulary& vocab) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open: " + path);
  std::vector<Example> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto where = [&] { return path + ":" + std::to_string(lineno); };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(where() + ": " + e.what());
    }
    if (!j.is_object()) throw Error(where() + ": expected a JSON object");
    for (auto& [key, value] : j.items())
      if (key != "s1" && key != "s2" && key != "label")
        throw Error(where() + ": unknown field \"" + key + "\"");
    for (const char* key : {"s1", "s2", "label"}) {
      if (!j.contains(key)) throw Error(where() + ": missing field \"" + key + "\"");
      if (!j[key].is_string()) throw Error(where() + ": field \"" + key + "\" must be a string");
    }
    Example ex;
    try {
      ex.s1 = tokenize(j["s1"].get<std::string>(), vocab);
      ex.s2 = tokenize(j["s2"].get<std::string>(), vocab);
    } catch (const Error& e) {
      throw Error(where() + ": " + e.what());
    }
    const std::string label = j["label"].get<std::string>();
    auto it = std::find(spec.verbalizers.begin(), spec.verbalizers.end(), label);
    if (it == spec.verbalizers.end())
      throw Error(where() + ": label \"" + label + "\" is not valid for " + spec.name);
    ex.label = static_cast<int>(it - spec.verbalizers.begin());
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace dawgen
