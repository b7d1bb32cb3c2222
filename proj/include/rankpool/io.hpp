#pragma once

// File formats.
//
// Dataset (JSON lines): one object per line,
//   {"id": "...", "label": "name" | integer, "frames": [[x11, ..., x1D], ...]}
// Labels are mapped to dense indices: when every label is an integer the
// class table is "0".."max", otherwise the sorted distinct label strings.
//
// Encodings (text): comment lines starting with '#' carry metadata, then a
// header "id,label,u_0,...,u_{D-1}" and one row per sequence. Values use 9
// significant digits ("%.9g"). The label column holds the class name.
//
// Encodings (binary, --binary): little-endian
//   "RPENC001" | u64 rows | u64 dim | u64 class count | classes as (u32 len, bytes)
//   then per row: u32 id length, id bytes, i64 label (-1 if none), dim x f64.
//
// Model (text, "rankpool-model 1"): one "key value..." record per line, see
// save_model for the key list. Reals use "%.17g" so the file round-trips.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankpool/training.hpp"

namespace rankpool {

namespace detail {

inline std::string format_real(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

inline double parse_real(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInput(where + ": cannot parse number '" + s + "'");
  }
}

/// Assign dense label indices from raw label tokens.
inline std::vector<std::string> class_table(const std::vector<std::optional<nlohmann::json>>& raw) {
  bool all_int = true;
  bool any = false;
  long long max_int = -1;
  std::set<std::string> names;
  for (const auto& r : raw) {
    if (!r) continue;
    any = true;
    if (r->is_number_integer()) {
      max_int = std::max<long long>(max_int, r->get<long long>());
      if (r->get<long long>() < 0) throw InvalidInput("integer labels must be non-negative");
      names.insert(std::to_string(r->get<long long>()));
    } else if (r->is_string()) {
      all_int = false;
      names.insert(r->get<std::string>());
    } else {
      throw InvalidInput("label must be a string or an integer");
    }
  }
  std::vector<std::string> table;
  if (!any) return table;
  if (all_int) {
    for (long long c = 0; c <= max_int; ++c) table.push_back(std::to_string(c));
  } else {
    table.assign(names.begin(), names.end());
  }
  return table;
}

inline int class_index(const std::vector<std::string>& table, const std::string& name) {
  for (std::size_t c = 0; c < table.size(); ++c)
    if (table[c] == name) return static_cast<int>(c);
  return -1;
}

inline std::string label_token(const nlohmann::json& j) {
  return j.is_string() ? j.get<std::string>() : std::to_string(j.get<long long>());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

inline Dataset read_dataset(std::istream& in) {
  std::vector<FrameSequence> seqs;
  std::vector<std::optional<nlohmann::json>> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidInput("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("frames") || !rec["frames"].is_array())
      throw InvalidInput("dataset line " + std::to_string(lineno) + ": record needs a 'frames' array");
    FrameSequence s;
    s.id = rec.contains("id") ? detail::label_token(rec["id"]) : "line" + std::to_string(lineno);
    for (const auto& row : rec["frames"]) {
      if (!row.is_array()) throw InvalidInput("dataset line " + std::to_string(lineno) + ": frame must be an array");
      Vector f(static_cast<Eigen::Index>(row.size()));
      for (std::size_t k = 0; k < row.size(); ++k) {
        if (!row[k].is_number()) throw InvalidInput("dataset line " + std::to_string(lineno) + ": non-numeric frame value");
        f[static_cast<Eigen::Index>(k)] = row[k].get<double>();
      }
      s.frames.push_back(std::move(f));
    }
    raw.push_back(rec.contains("label") && !rec["label"].is_null() ? std::optional(rec["label"]) : std::nullopt);
    seqs.push_back(std::move(s));
  }
  Dataset ds;
  ds.class_names = detail::class_table(raw);
  for (std::size_t i = 0; i < seqs.size(); ++i)
    if (raw[i]) seqs[i].label = detail::class_index(ds.class_names, detail::label_token(*raw[i]));
  ds.sequences = std::move(seqs);
  return ds;
}

inline Dataset read_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

/// Each sequence as one JSON line; labels are written as class names.
inline void write_dataset(std::ostream& out, const Dataset& ds) {
  for (const auto& s : ds.sequences) {
    nlohmann::json rec;
    rec["id"] = s.id;
    if (s.label && static_cast<std::size_t>(*s.label) < ds.class_names.size())
      rec["label"] = ds.class_names[static_cast<std::size_t>(*s.label)];
    else
      rec["label"] = nullptr;
    nlohmann::json frames = nlohmann::json::array();
    for (const auto& f : s.frames) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index k = 0; k < f.size(); ++k) row.push_back(f[k]);
      frames.push_back(std::move(row));
    }
    rec["frames"] = std::move(frames);
    out << rec.dump() << '\n';
  }
}

/// One whitespace- or comma-delimited matrix per file. Files directly in
/// `dir` are unlabelled; files in a subdirectory take its name as label.
inline Dataset read_dataset_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw InvalidInput("'" + dir + "' is not a directory");
  std::vector<std::pair<std::string, fs::path>> files;   // (label or "", path)
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) {
      files.emplace_back("", entry.path());
    } else if (entry.is_directory()) {
      for (const auto& sub : fs::directory_iterator(entry.path()))
        if (sub.is_regular_file()) files.emplace_back(entry.path().filename().string(), sub.path());
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<std::optional<nlohmann::json>> raw;
  Dataset ds;
  for (const auto& [label, path] : files) {
    std::ifstream in(path);
    FrameSequence s;
    s.id = path.stem().string();
    std::string line;
    while (std::getline(in, line)) {
      for (char& c : line)
        if (c == ',' || c == ';' || c == '\t') c = ' ';
      std::istringstream ls(line);
      std::vector<double> vals;
      std::string tok;
      while (ls >> tok) vals.push_back(detail::parse_real(tok, path.string()));
      if (vals.empty()) continue;
      s.frames.emplace_back(Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size())));
    }
    raw.push_back(label.empty() ? std::nullopt : std::optional(nlohmann::json(label)));
    ds.sequences.push_back(std::move(s));
  }
  ds.class_names = detail::class_table(raw);
  for (std::size_t i = 0; i < raw.size(); ++i)
    if (raw[i]) ds.sequences[i].label = detail::class_index(ds.class_names, raw[i]->get<std::string>());
  return ds;
}

// ---------------------------------------------------------------------------
// Encodings
// ---------------------------------------------------------------------------

struct EncodingTable {
  std::vector<std::string> ids;
  std::vector<std::optional<int>> labels;
  std::vector<Vector> rows;
  std::vector<std::string> class_names;
  nlohmann::json meta = nlohmann::json::object();

  std::size_t size() const noexcept { return rows.size(); }
  std::size_t dim() const noexcept { return rows.empty() ? 0 : static_cast<std::size_t>(rows.front().size()); }
};

inline void write_encodings(std::ostream& out, const EncodingTable& t) {
  out << "# rankpool-encodings 1\n";
  out << "# config " << t.meta.dump() << '\n';
  out << "# classes " << nlohmann::json(t.class_names).dump() << '\n';
  out << "id,label";
  for (std::size_t k = 0; k < t.dim(); ++k) out << ",u_" << k;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << detail::csv_field(t.ids[i]) << ',';
    if (t.labels[i] && static_cast<std::size_t>(*t.labels[i]) < t.class_names.size())
      out << detail::csv_field(t.class_names[static_cast<std::size_t>(*t.labels[i])]);
    for (Eigen::Index k = 0; k < t.rows[i].size(); ++k) out << ',' << detail::format_real(t.rows[i][k], 9);
    out << '\n';
  }
}

inline EncodingTable read_encodings(std::istream& in) {
  EncodingTable t;
  std::string line;
  bool header = false;
  std::size_t dim = 0;
  std::size_t lineno = 0;
  std::vector<std::string> label_names;
  bool have_table = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(1);
      auto starts = [&](const char* key) { return body.rfind(std::string(" ") + key + " ", 0) == 0; };
      try {
        if (starts("config")) t.meta = nlohmann::json::parse(body.substr(8));
        if (starts("classes")) {
          t.class_names = nlohmann::json::parse(body.substr(9)).get<std::vector<std::string>>();
          have_table = true;
        }
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("encodings line " + std::to_string(lineno) + ": " + e.what());
      }
      continue;
    }
    const auto f = detail::split_csv(line);
    if (!header) {
      if (f.size() < 3 || f[0] != "id" || f[1] != "label") throw InvalidInput("encodings file lacks the id,label header");
      dim = f.size() - 2;
      header = true;
      continue;
    }
    if (f.size() != dim + 2)
      throw InvalidInput("encodings line " + std::to_string(lineno) + ": expected " + std::to_string(dim + 2) + " columns");
    const std::string where = "encodings line " + std::to_string(lineno);
    Vector u(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < dim; ++k) u[static_cast<Eigen::Index>(k)] = detail::parse_real(f[k + 2], where);
    t.ids.push_back(f[0]);
    label_names.push_back(f[1]);
    t.rows.push_back(std::move(u));
  }
  if (!header) throw InvalidInput("encodings file lacks the id,label header");
  if (!have_table) {
    std::set<std::string> names;
    for (const auto& n : label_names)
      if (!n.empty()) names.insert(n);
    t.class_names.assign(names.begin(), names.end());
  }
  for (const auto& n : label_names) {
    if (n.empty()) {
      t.labels.emplace_back(std::nullopt);
      continue;
    }
    const int c = detail::class_index(t.class_names, n);
    if (c < 0) throw InvalidInput("label '" + n + "' missing from the class table");
    t.labels.emplace_back(c);
  }
  return t;
}

namespace detail {

template <class T>
void put(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T))) throw InvalidInput("truncated binary encodings file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw InvalidInput("truncated binary encodings file");
  return s;
}

}  // namespace detail

inline constexpr char kBinaryEncodingMagic[8] = {'R', 'P', 'E', 'N', 'C', '0', '0', '1'};

inline void write_encodings_binary(std::ostream& out, const EncodingTable& t) {
  out.write(kBinaryEncodingMagic, 8);
  detail::put<std::uint64_t>(out, t.size());
  detail::put<std::uint64_t>(out, t.dim());
  detail::put<std::uint64_t>(out, t.class_names.size());
  for (const auto& c : t.class_names) detail::put_string(out, c);
  for (std::size_t i = 0; i < t.size(); ++i) {
    detail::put_string(out, t.ids[i]);
    detail::put<std::int64_t>(out, t.labels[i] ? *t.labels[i] : -1);
    for (Eigen::Index k = 0; k < t.rows[i].size(); ++k) detail::put<double>(out, t.rows[i][k]);
  }
}

inline EncodingTable read_encodings_binary(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kBinaryEncodingMagic))
    throw InvalidInput("not a binary encodings file");
  EncodingTable t;
  const auto n = detail::get<std::uint64_t>(in);
  const auto d = detail::get<std::uint64_t>(in);
  const auto k = detail::get<std::uint64_t>(in);
  for (std::uint64_t c = 0; c < k; ++c) t.class_names.push_back(detail::get_string(in));
  for (std::uint64_t i = 0; i < n; ++i) {
    t.ids.push_back(detail::get_string(in));
    const auto y = detail::get<std::int64_t>(in);
    t.labels.push_back(y < 0 ? std::nullopt : std::optional<int>(static_cast<int>(y)));
    Vector u(static_cast<Eigen::Index>(d));
    for (std::uint64_t j = 0; j < d; ++j) u[static_cast<Eigen::Index>(j)] = detail::get<double>(in);
    t.rows.push_back(std::move(u));
  }
  return t;
}

/// Reads either encoding format, sniffing the binary magic.
inline EncodingTable read_encodings_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open encodings '" + path + "'");
  char magic[8] = {};
  in.read(magic, 8);
  const bool binary = in.gcount() == 8 && std::equal(magic, magic + 8, kBinaryEncodingMagic);
  in.clear();
  in.seekg(0);
  return binary ? read_encodings_binary(in) : read_encodings(in);
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------
//
//   rankpool-model 1
//   encoder precomputed|discriminative|end2end
//   loss cross-entropy|hinge
//   normalize 0|1
//   classes K
//   class <index> <name>            (K lines)
//   dim D
//   beta <K*D reals, row-major>
//   bias <K reals>
//   map <kind>                      (discriminative)
//   svr <C> <epsilon> <tol> <max_iter>
//   W <rows> <cols> <reals>         (discriminative)
//   upstream <rows> <cols> <activation> <frozen> <A reals> <b reals>   (end2end, affine)
//   train_accuracy <real>
//   trace <n> <reals>
//   meta <key> <value...>           (any number)

inline void save_model(std::ostream& out, const Model& m) {
  auto reals = [&](auto&& xs) {
    for (Eigen::Index i = 0; i < xs.size(); ++i) out << ' ' << detail::format_real(xs.data()[i], 17);
  };
  out << "rankpool-model 1\n";
  out << "encoder " << to_string(m.encoder) << '\n';
  out << "loss " << to_string(m.head.loss) << '\n';
  out << "normalize " << (m.head.normalize ? 1 : 0) << '\n';
  out << "classes " << m.head.classes() << '\n';
  for (std::size_t c = 0; c < m.class_names.size(); ++c) out << "class " << c << ' ' << m.class_names[c] << '\n';
  out << "dim " << m.head.dim() << '\n';
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> beta = m.head.beta;
  out << "beta";
  reals(beta);
  out << "\nbias";
  reals(m.head.bias);
  out << "\nmap " << to_string(m.map) << '\n';
  out << "svr " << detail::format_real(m.svr.C, 17) << ' ' << detail::format_real(m.svr.epsilon, 17) << ' '
      << detail::format_real(m.svr.tol, 17) << ' ' << m.svr.max_iter << '\n';
  if (m.W) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = *m.W;
    out << "W " << w.rows() << ' ' << w.cols();
    reals(w);
    out << '\n';
  }
  if (m.upstream) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a = m.upstream->weight();
    out << "upstream " << a.rows() << ' ' << a.cols() << ' ' << to_string(m.upstream->activation()) << ' '
        << (m.upstream->frozen() ? 1 : 0);
    reals(a);
    reals(m.upstream->bias());
    out << '\n';
  }
  out << "train_accuracy " << detail::format_real(m.train_accuracy, 17) << '\n';
  out << "trace " << m.loss_trace.size();
  for (double l : m.loss_trace) out << ' ' << detail::format_real(l, 17);
  out << '\n';
  for (const auto& [k, v] : m.meta) out << "meta " << k << ' ' << v << '\n';
}

inline Model load_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "rankpool-model 1") throw InvalidInput("not a rankpool model file (version 1)");
  Model m;
  std::size_t k = 0, d = 0;
  std::vector<double> beta, bias;
  auto read_reals = [](std::istringstream& ls, std::size_t n, const std::string& key) {
    std::vector<double> v(n);
    std::string tok;
    for (auto& x : v) {
      if (!(ls >> tok)) throw InvalidInput("model field '" + key + "' is truncated");
      x = detail::parse_real(tok, "model field '" + key + "'");
    }
    return v;
  };
  auto to_matrix = [](const std::vector<double>& v, std::size_t r, std::size_t c) {
    Matrix out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[i * c + j];
    return out;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "encoder") {
      std::string s;
      ls >> s;
      m.encoder = parse_encoder_kind(s);
    } else if (key == "loss") {
      std::string s;
      ls >> s;
      m.head.loss = parse_loss_kind(s);
    } else if (key == "normalize") {
      int b = 0;
      ls >> b;
      m.head.normalize = b != 0;
    } else if (key == "classes") {
      ls >> k;
      m.class_names.assign(k, "");
    } else if (key == "class") {
      std::size_t c = 0;
      ls >> c;
      std::string name;
      std::getline(ls >> std::ws, name);
      if (c >= m.class_names.size()) throw InvalidInput("model class index out of range");
      m.class_names[c] = name;
    } else if (key == "dim") {
      ls >> d;
    } else if (key == "beta") {
      beta = read_reals(ls, k * d, key);
    } else if (key == "bias") {
      bias = read_reals(ls, k, key);
    } else if (key == "map") {
      std::string s;
      ls >> s;
      m.map = parse_map_kind(s);
    } else if (key == "svr") {
      std::string c, e, t;
      ls >> c >> e >> t >> m.svr.max_iter;
      m.svr.C = detail::parse_real(c, "svr");
      m.svr.epsilon = detail::parse_real(e, "svr");
      m.svr.tol = detail::parse_real(t, "svr");
    } else if (key == "W") {
      std::size_t r = 0, c = 0;
      ls >> r >> c;
      m.W = to_matrix(read_reals(ls, r * c, key), r, c);
    } else if (key == "upstream") {
      std::size_t r = 0, c = 0;
      std::string act;
      int frozen = 0;
      ls >> r >> c >> act >> frozen;
      Matrix a = to_matrix(read_reals(ls, r * c, key), r, c);
      const auto b = read_reals(ls, r, key);
      m.upstream = AffineUpstream(std::move(a), Eigen::Map<const Vector>(b.data(), static_cast<Eigen::Index>(r)),
                                  parse_map_kind(act), frozen != 0);
    } else if (key == "train_accuracy") {
      std::string s;
      ls >> s;
      m.train_accuracy = detail::parse_real(s, key);
    } else if (key == "trace") {
      std::size_t n = 0;
      ls >> n;
      m.loss_trace = read_reals(ls, n, key);
    } else if (key == "meta") {
      std::string mk, mv;
      ls >> mk;
      std::getline(ls >> std::ws, mv);
      m.meta[mk] = mv;
    } else {
      throw InvalidInput("unknown model field '" + key + "'");
    }
  }
  if (k < 2 || d < 1 || beta.size() != k * d || bias.size() != k) throw InvalidInput("model file is incomplete");
  m.head.beta = to_matrix(beta, k, d);
  m.head.bias = Eigen::Map<const Vector>(bias.data(), static_cast<Eigen::Index>(k));
  if (m.encoder == EncoderKind::Discriminative && !m.W) throw InvalidInput("discriminative model lacks W");
  return m;
}

inline void save_model_file(const std::string& path, const Model& m) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write model '" + path + "'");
  save_model(out, m);
}

inline Model load_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open model '" + path + "'");
  return load_model(in);
}

}  // namespace rankpool
