#include "saber/store.hpp"

#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "saber/error.hpp"

namespace saber {

using nlohmann::json;

void DemoLibrary::add(DemoRecord record) {
  if (record.id.empty()) throw FormatError("demo record with empty id");
  if (index_.count(record.id) != 0) {
    throw FormatError("duplicate id '" + record.id + "'");
  }
  for (const Vector* v : {&record.img, &record.q, &record.r, &record.qr}) {
    if (!v->empty() && v->size() != dim_) {
      throw FormatError(fmt::format("record '{}': vector of length {} under dim {}",
                                    record.id, v->size(), dim_));
    }
  }
  index_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

const DemoRecord& DemoLibrary::get(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidArgument("unknown demonstration id '" + id + "'");
  return records_[it->second];
}

std::optional<std::size_t> DemoLibrary::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::unordered_map<std::string, const QuerySample*> index_queries(
    const std::vector<QuerySample>& queries) {
  std::unordered_map<std::string, const QuerySample*> out;
  for (const auto& q : queries) {
    if (!out.emplace(q.id, &q).second) {
      throw FormatError("duplicate query id '" + q.id + "'");
    }
  }
  return out;
}

namespace {

struct LineContext {
  std::size_t line;
  std::size_t dim;
};

[[noreturn]] void fail(const LineContext& ctx, const std::string& msg) {
  throw FormatError(fmt::format("line {}: {}", ctx.line, msg));
}

Vector read_vector(const json& obj, const char* key, const LineContext& ctx,
                   bool required) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) fail(ctx, fmt::format("missing required field '{}'", key));
    return {};
  }
  if (!it->is_array()) fail(ctx, fmt::format("field '{}' must be an array", key));
  Vector out;
  out.reserve(it->size());
  for (const auto& x : *it) {
    if (!x.is_number()) fail(ctx, fmt::format("field '{}' has a non-numeric entry", key));
    out.push_back(static_cast<float>(x.get<double>()));
  }
  if (out.size() != ctx.dim) {
    fail(ctx, fmt::format("dimension mismatch in '{}': length {} under dim {}", key,
                          out.size(), ctx.dim));
  }
  return out;
}

std::string read_string(const json& obj, const char* key, const LineContext& ctx,
                        bool required = false) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) {
    if (required) fail(ctx, fmt::format("missing required field '{}'", key));
    return {};
  }
  if (!it->is_string()) fail(ctx, fmt::format("field '{}' must be a string", key));
  return it->get<std::string>();
}

// 9 significant digits round-trip any f32 exactly.
void append_vector(std::string& out, const char* key, const Vector& v) {
  if (v.empty()) return;
  out += fmt::format(",\"{}\":[", key);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt::format("{:.9g}", static_cast<double>(v[i]));
  }
  out += ']';
}

void append_string(std::string& out, const char* key, const std::string& s,
                   bool always = false) {
  if (s.empty() && !always) return;
  out += fmt::format(",\"{}\":{}", key, json(s).dump());
}

}  // namespace

Store parse_store(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  Store store;
  bool header_seen = false;
  std::unordered_map<std::string, std::size_t> seen_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(fmt::format("line {}: malformed JSON: {}", line_no, e.what()));
    }
    if (!obj.is_object()) {
      throw FormatError(fmt::format("line {}: expected a JSON object", line_no));
    }
    if (!header_seen) {
      if (obj.value("format", "") != kStoreFormat) {
        throw FormatError(fmt::format("line {}: header must declare format '{}'",
                                      line_no, kStoreFormat));
      }
      auto dim = obj.find("dim");
      if (dim == obj.end() || !dim->is_number_integer() || dim->get<long long>() <= 0) {
        throw FormatError(fmt::format("line {}: header needs a positive integer 'dim'",
                                      line_no));
      }
      store.library = DemoLibrary(dim->get<std::size_t>());
      header_seen = true;
      continue;
    }

    const LineContext ctx{line_no, store.library.dim()};
    const std::string id = read_string(obj, "id", ctx, true);
    if (id.empty()) fail(ctx, "empty id");
    if (!seen_ids.emplace(id, line_no).second) {
      fail(ctx, fmt::format("duplicate id '{}' (first seen on line {})", id,
                            seen_ids[id]));
    }
    const std::string role = read_string(obj, "role", ctx, true);

    if (role == "demo") {
      DemoRecord rec;
      rec.id = id;
      rec.task_tag = read_string(obj, "task", ctx);
      rec.img = read_vector(obj, "img", ctx, false);
      rec.q = read_vector(obj, "q", ctx, false);
      rec.r = read_vector(obj, "r", ctx, false);
      rec.qr = read_vector(obj, "qr", ctx, false);
      if (!rec.has_img() && !rec.has_q() && !rec.has_qr()) {
        fail(ctx, "demo record carries no embedding");
      }
      rec.text_q = read_string(obj, "text_q", ctx);
      rec.text_r = read_string(obj, "text_r", ctx);
      rec.image_ref = read_string(obj, "image_ref", ctx);
      store.library.add(std::move(rec));
    } else if (role == "query") {
      QuerySample qs;
      qs.id = id;
      qs.task_tag = read_string(obj, "task", ctx);
      qs.img = read_vector(obj, "img", ctx, true);
      qs.q = read_vector(obj, "q", ctx, true);
      qs.pseudo_r = read_vector(obj, "pseudo_r", ctx, false);
      qs.gt_result = read_string(obj, "gt", ctx);
      qs.text_q = read_string(obj, "text_q", ctx);
      qs.image_ref = read_string(obj, "image_ref", ctx);
      store.queries.push_back(std::move(qs));
    } else if (role == "inst") {
      if (store.instruction) fail(ctx, "more than one instruction record");
      InstructionRecord inst;
      inst.id = id;
      inst.inst_emb = read_vector(obj, "inst", ctx, true);
      inst.text = read_string(obj, "text_q", ctx);
      inst.simplified_text = read_string(obj, "text_r", ctx);
      store.instruction = std::move(inst);
    } else {
      fail(ctx, fmt::format("unknown role '{}'", role));
    }
  }
  if (!header_seen) throw FormatError("line 1: missing header");
  return store;
}

Store load_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open store '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_store(buf.str());
}

std::string serialize_store(const Store& store) {
  if (store.library.empty()) throw InvalidArgument("save_store: empty library");
  std::string out = fmt::format("{{\"format\":\"{}\",\"dim\":{}}}\n", kStoreFormat,
                                store.library.dim());
  for (const auto& rec : store.library) {
    out += "{\"id\":" + json(rec.id).dump() + ",\"role\":\"demo\"";
    append_string(out, "task", rec.task_tag);
    append_vector(out, "img", rec.img);
    append_vector(out, "q", rec.q);
    append_vector(out, "r", rec.r);
    append_vector(out, "qr", rec.qr);
    append_string(out, "text_q", rec.text_q);
    append_string(out, "text_r", rec.text_r);
    append_string(out, "image_ref", rec.image_ref);
    out += "}\n";
  }
  for (const auto& qs : store.queries) {
    out += "{\"id\":" + json(qs.id).dump() + ",\"role\":\"query\"";
    append_string(out, "task", qs.task_tag);
    append_vector(out, "img", qs.img);
    append_vector(out, "q", qs.q);
    append_string(out, "text_q", qs.text_q);
    append_string(out, "image_ref", qs.image_ref);
    append_string(out, "gt", qs.gt_result);
    append_vector(out, "pseudo_r", qs.pseudo_r);
    out += "}\n";
  }
  if (store.instruction) {
    const auto& inst = *store.instruction;
    out += "{\"id\":" + json(inst.id).dump() + ",\"role\":\"inst\"";
    append_string(out, "text_q", inst.text);
    append_string(out, "text_r", inst.simplified_text);
    append_vector(out, "inst", inst.inst_emb);
    out += "}\n";
  }
  return out;
}

void save_store(const Store& store, const std::filesystem::path& path) {
  const std::string text = serialize_store(store);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write store '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace saber
