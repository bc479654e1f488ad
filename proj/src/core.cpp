#include "ccim/core.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

namespace ccim::core {

using nlohmann::json;

void LabelSet::validate() const {
  if (const auto* m = std::get_if<MultiLabel>(&value)) {
    if (m->bits.empty()) throw validation_error("multi-label bit-vector is empty");
  } else if (const auto* s = std::get_if<SingleLabel>(&value)) {
    if (s->num_classes < 1 || s->index < 0 || s->index >= s->num_classes)
      throw validation_error("single-label index out of range");
  } else if (const auto* v = std::get_if<VadLabel>(&value)) {
    for (double x : {v->valence, v->arousal, v->dominance})
      if (!(x >= 1.0 && x <= 10.0))
        throw validation_error("VAD component outside [1, 10]");
  }
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw schema_error("unknown split '" + s + "'");
}

void FeatureSet::validate() const {
  if (rows.size() != row_ids.size())
    throw validation_error("feature set rows and row_ids lengths differ");
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != dim)
      throw validation_error("feature row " + std::to_string(i) + " has wrong width");
    for (float v : rows[i])
      if (!std::isfinite(v))
        throw validation_error("non-finite entry in feature row '" + row_ids[i] + "'");
  }
}

namespace {

LabelSet parse_labels(const json& j, const std::string& sample_id) {
  LabelSet out;
  if (j.contains("multi")) {
    int num_classes = j.at("num_classes").get<int>();
    if (num_classes < 1) throw schema_error("num_classes < 1 in sample '" + sample_id + "'");
    MultiLabel m;
    m.bits.assign(num_classes, false);
    for (int idx : j.at("multi").get<std::vector<int>>()) {
      if (idx < 0 || idx >= num_classes)
        throw schema_error("multi-label index out of range in sample '" + sample_id + "'");
      m.bits[idx] = true;
    }
    out.value = std::move(m);
  } else if (j.contains("single")) {
    SingleLabel s;
    s.index = j.at("single").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    out.value = s;
  } else if (j.contains("vad")) {
    auto v = j.at("vad").get<std::vector<double>>();
    if (v.size() != 3) throw schema_error("vad label needs 3 components in sample '" + sample_id + "'");
    out.value = VadLabel{v[0], v[1], v[2]};
  } else {
    throw schema_error("labels need one of fields multi/single/vad in sample '" + sample_id + "'");
  }
  out.validate();
  return out;
}

json labels_to_json(const LabelSet& l) {
  json j;
  if (const auto* m = std::get_if<MultiLabel>(&l.value)) {
    std::vector<int> idx;
    for (size_t i = 0; i < m->bits.size(); ++i)
      if (m->bits[i]) idx.push_back(static_cast<int>(i));
    j["multi"] = idx;
    j["num_classes"] = m->bits.size();
  } else if (const auto* s = std::get_if<SingleLabel>(&l.value)) {
    j["single"] = s->index;
    j["num_classes"] = s->num_classes;
  } else {
    const auto& v = std::get<VadLabel>(l.value);
    j["vad"] = {v.valence, v.arousal, v.dominance};
  }
  return j;
}

}  // namespace

std::vector<Sample> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open manifest '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw schema_error("manifest parse failure in '" + path + "': " + e.what());
  }
  if (!doc.is_object() || !doc.contains("samples") || !doc["samples"].is_array())
    throw schema_error("manifest must be an object with a 'samples' array");

  std::vector<Sample> samples;
  std::unordered_set<std::string> seen;
  for (const auto& js : doc["samples"]) {
    Sample s;
    try {
      s.sample_id = js.at("sample_id").get<std::string>();
    } catch (const json::exception&) {
      throw schema_error("sample entry missing field 'sample_id'");
    }
    if (!seen.insert(s.sample_id).second)
      throw duplication_error("duplicate sample_id '" + s.sample_id + "'");
    try {
      s.split = split_from_string(js.at("split").get<std::string>());
      s.labels = parse_labels(js.at("labels"), s.sample_id);
      if (js.contains("grid")) {
        Grid g;
        g.rows = js["grid"].at("rows").get<int>();
        g.cols = js["grid"].at("cols").get<int>();
        g.cells = js["grid"].at("cells").get<std::vector<float>>();
        if (g.rows < 1 || g.cols < 1 ||
            g.cells.size() != static_cast<size_t>(g.rows) * g.cols)
          throw schema_error("grid shape mismatch in sample '" + s.sample_id + "'");
        s.image = std::move(g);
      }
      if (js.contains("synthetic")) {
        SyntheticRecord r;
        r.s = js["synthetic"].at("s").get<int>();
        r.c = js["synthetic"].at("c").get<int>();
        r.n_s = js["synthetic"].at("n_s").get<int>();
        r.n_c = js["synthetic"].at("n_c").get<int>();
        if (r.n_s < 1 || r.n_c < 1 || r.s < 0 || r.s >= r.n_s || r.c < 0 || r.c >= r.n_c)
          throw schema_error("synthetic record out of range in sample '" + s.sample_id + "'");
        s.synthetic = r;
      }
      if (js.contains("subject_box")) {
        auto b = js["subject_box"].get<std::vector<int>>();
        if (b.size() != 4) throw schema_error("subject_box needs 4 entries in sample '" + s.sample_id + "'");
        s.subject_box = BoundingBox{b[0], b[1], b[2], b[3]};
      }
    } catch (const json::exception& e) {
      throw schema_error("bad field in sample '" + s.sample_id + "': " + e.what());
    }
    if (s.subject_box) {
      try {
        if (s.image)
          s.subject_box->validate_within(s.image->rows, s.image->cols);
        else
          s.subject_box->validate();
      } catch (const Error& e) {
        throw validation_error(std::string(e.what()) + " in sample '" + s.sample_id + "'");
      }
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_manifest(const std::vector<Sample>& samples, const std::string& path) {
  json doc;
  doc["samples"] = json::array();
  for (const auto& s : samples) {
    json js;
    js["sample_id"] = s.sample_id;
    js["split"] = to_string(s.split);
    js["labels"] = labels_to_json(s.labels);
    if (s.image) {
      js["grid"] = {{"rows", s.image->rows},
                    {"cols", s.image->cols},
                    {"cells", s.image->cells}};
    }
    if (s.synthetic) {
      js["synthetic"] = {{"s", s.synthetic->s},
                         {"c", s.synthetic->c},
                         {"n_s", s.synthetic->n_s},
                         {"n_c", s.synthetic->n_c}};
    }
    if (s.subject_box) {
      js["subject_box"] = {s.subject_box->x0, s.subject_box->y0,
                           s.subject_box->x1, s.subject_box->y1};
    }
    doc["samples"].push_back(std::move(js));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw io_error("cannot write manifest '" + path + "'");
  out << doc.dump(1) << "\n";
}

namespace {

constexpr char kFeatureMagic[8] = {'C', 'C', 'I', 'M', 'F', 'E', 'A', '1'};

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw corruption_error("truncated 64-bit field");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_feature_set(const FeatureSet& fs, const std::string& path) {
  fs.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot write feature file '" + path + "'");
  out.write(kFeatureMagic, 8);
  write_u64(out, fs.dim);
  write_u64(out, fs.rows.size());
  for (const auto& row : fs.rows)
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  for (const auto& id : fs.row_ids) out << id << '\n';
}

FeatureSet read_feature_set(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open feature file '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kFeatureMagic, 8) != 0)
    throw format_error("bad magic in feature file '" + path + "'");
  FeatureSet fs;
  fs.dim = read_u64(in);
  uint64_t n_rows = read_u64(in);
  fs.rows.resize(n_rows);
  for (auto& row : fs.rows) {
    row.resize(fs.dim);
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(fs.dim * sizeof(float)));
    if (!in) throw corruption_error("feature file '" + path + "' ends before declared row count");
  }
  std::string id;
  while (std::getline(in, id)) fs.row_ids.push_back(id);
  if (fs.row_ids.size() != n_rows)
    throw corruption_error("feature file '" + path + "' row id count mismatch");
  return fs;
}

}  // namespace ccim::core
