#include "saber/prompt.hpp"

#include <fmt/format.h>

#include "saber/error.hpp"

namespace saber::prompt {

namespace {

std::size_t count_of(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

void expect(const PromptTemplate& t, const char* part, const std::string& pattern,
            std::initializer_list<const char*> required, std::initializer_list<const char*> banned) {
  for (const char* name : required) {
    const auto n = count_of(pattern, fmt::format("{{{}}}", name));
    if (n != 1) {
      throw ConfigError(fmt::format("template '{}': {} pattern has {{{}}} {} times, expected once",
                                    t.name, part, name, n));
    }
  }
  for (const char* name : banned) {
    if (count_of(pattern, fmt::format("{{{}}}", name)) != 0) {
      throw ConfigError(
          fmt::format("template '{}': {} pattern must not contain {{{}}}", t.name, part, name));
    }
  }
}

std::string image_marker(const std::string& ref) { return "{image:" + ref + "}"; }

}  // namespace

void PromptTemplate::validate() const {
  expect(*this, "instruction", instruction, {"instruction"}, {"image", "question", "answer"});
  expect(*this, "icd", icd, {"image", "question", "answer"}, {"instruction"});
  expect(*this, "query", query, {"image", "question"}, {"answer", "instruction"});
}

PromptTemplate template_from_json(const std::string& name, const nlohmann::json& j) {
  PromptTemplate t;
  t.name = name;
  try {
    t.prefix = j.value("prefix", "");
    t.instruction = j.value("instruction", "{instruction}\n");
    t.icd = j.at("icd").get<std::string>();
    t.query = j.at("query").get<std::string>();
    t.suffix = j.value("suffix", "");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("template '{}': {}", name, e.what()));
  }
  t.validate();
  return t;
}

const std::map<std::string, PromptTemplate>& builtin_templates() {
  static const std::map<std::string, PromptTemplate> all = [] {
    std::map<std::string, PromptTemplate> m;
    m["generic"] = {"generic", "", "{instruction}\n",
                    "{image}\nQuestion: {question}\nAnswer: {answer}\n",
                    "{image}\nQuestion: {question}\nAnswer:", ""};
    m["openflamingo"] = {"openflamingo", "", "{instruction}\n\n",
                         "<image>{image}<|endofchunk|>\nQuestion: {question}\nAnswer: {answer}\n\n",
                         "<image>{image}<|endofchunk|>\nQuestion: {question}\nAnswer:", ""};
    m["idefics2"] = {"idefics2", "", "User: {instruction}",
                     "\nUser:<|image_pad|>{image} Question: {question} <end_of_utterance>"
                     "\nAssistant: Answer: {answer}. <end_of_utterance>",
                     "\nUser:<|image_pad|>{image} Question: {question} <end_of_utterance>"
                     "\nAssistant: Answer:",
                     ""};
    m["internvl2"] = {"internvl2", "", "{instruction}\n\n",
                      "<img>{image}</img>\nQuestion: {question}\nAnswer: {answer}\n\n",
                      "<img>{image}</img>\nQuestion: {question}\nAnswer:", ""};
    m["qwen2vl"] = {"qwen2vl",
                    "<|im_start|>system\nYou are a helpful assistant.<|im_end|>\n<|im_start|>user\n",
                    "{instruction}\n\n",
                    "<|vision_start|>{image}<|vision_end|>Question: {question} Answer: {answer}\n\n",
                    "<|vision_start|>{image}<|vision_end|>Question: {question} Answer: <|im_end|>",
                    "\n<|im_start|>assistant\n"};
    for (const auto& [name, t] : m) t.validate();
    return m;
  }();
  return all;
}

const PromptTemplate& builtin_template(const std::string& name) {
  const auto& all = builtin_templates();
  auto it = all.find(name);
  if (it == all.end()) throw ConfigError("unknown prompt template '" + name + "'");
  return it->second;
}

std::string render(const std::string& pattern, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] == '{') {
      const auto close = pattern.find('}', i + 1);
      if (close != std::string::npos) {
        auto it = values.find(pattern.substr(i + 1, close - i - 1));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += pattern[i++];
  }
  return out;
}

std::string assemble_prompt(const std::string& instruction,
                            std::span<const DemoRecord* const> icds, const QuerySample& query,
                            const PromptTemplate& tpl) {
  std::string out = tpl.prefix + render(tpl.instruction, {{"instruction", instruction}});
  for (const DemoRecord* d : icds) {
    if (d->text_q.empty() || d->text_r.empty() || d->image_ref.empty()) {
      throw InvalidArgument("ICD '" + d->id + "' lacks text_q, text_r or image_ref");
    }
    out += render(tpl.icd, {{"image", image_marker(d->image_ref)},
                            {"question", d->text_q},
                            {"answer", d->text_r}});
  }
  if (query.text_q.empty() || query.image_ref.empty()) {
    throw InvalidArgument("query '" + query.id + "' lacks text_q or image_ref");
  }
  out += render(tpl.query, {{"image", image_marker(query.image_ref)}, {"question", query.text_q}});
  return out + tpl.suffix;
}

}  // namespace saber::prompt
