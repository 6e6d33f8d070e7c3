#pragma once

#include <map>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "saber/store.hpp"

namespace saber::prompt {

// A prompt layout: prefix, instruction block, one block per ICD, the query
// block, suffix. Placeholders: {instruction} in `instruction`; {image},
// {question}, {answer} in `icd`; {image}, {question} in `query`. Each must
// appear exactly once. {image} renders as `{image:<image_ref>}`.
struct PromptTemplate {
  std::string name;
  std::string prefix;
  std::string instruction;
  std::string icd;
  std::string query;
  std::string suffix;

  // Throws ConfigError naming the template and the offending placeholder.
  void validate() const;
};

PromptTemplate template_from_json(const std::string& name, const nlohmann::json& j);

// generic, openflamingo, idefics2, internvl2, qwen2vl.
const std::map<std::string, PromptTemplate>& builtin_templates();
const PromptTemplate& builtin_template(const std::string& name);

// Throws InvalidArgument when an ICD lacks text_q, text_r or image_ref, or
// the query lacks text_q or image_ref.
std::string assemble_prompt(const std::string& instruction,
                            std::span<const DemoRecord* const> icds, const QuerySample& query,
                            const PromptTemplate& tpl);

// Single-pass substitution of {name} placeholders; unknown names are kept.
std::string render(const std::string& pattern, const std::map<std::string, std::string>& values);

}  // namespace saber::prompt
