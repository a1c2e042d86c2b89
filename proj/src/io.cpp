#include "mcs/io.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mcs {

namespace {

[[noreturn]] void fail(const std::string& message) {
  throw std::runtime_error(message);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path + ": cannot open");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(path + ": write failed");
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream stream(line);
  std::string token;
  while (stream >> token) out.push_back(token);
  return out;
}

double parse_double(const std::string& token, const std::string& where) {
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size() || token.empty())
    fail(where + ": '" + token + "' is not a number");
  return value;
}

long parse_long(const std::string& token, const std::string& where) {
  char* end = nullptr;
  const long value = std::strtol(token.c_str(), &end, 10);
  if (end != token.c_str() + token.size() || token.empty())
    fail(where + ": '" + token + "' is not an integer");
  return value;
}

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

int type_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8:
      return 1;
    case PlyType::i16:
    case PlyType::u16:
      return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32:
      return 4;
    case PlyType::f64:
      return 8;
  }
  return 0;
}

PlyType parse_ply_type(const std::string& name, const std::string& where) {
  static const std::map<std::string, PlyType> types = {
      {"char", PlyType::i8},     {"int8", PlyType::i8},
      {"uchar", PlyType::u8},    {"uint8", PlyType::u8},
      {"short", PlyType::i16},   {"int16", PlyType::i16},
      {"ushort", PlyType::u16},  {"uint16", PlyType::u16},
      {"int", PlyType::i32},     {"int32", PlyType::i32},
      {"uint", PlyType::u32},    {"uint32", PlyType::u32},
      {"float", PlyType::f32},   {"float32", PlyType::f32},
      {"double", PlyType::f64},  {"float64", PlyType::f64},
  };
  const auto it = types.find(name);
  if (it == types.end()) fail(where + ": unknown property type '" + name + "'");
  return it->second;
}

struct PlyProperty {
  std::string name;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
  PlyType value_type = PlyType::f64;
};

struct PlyElement {
  std::string name;
  long count = 0;
  std::vector<PlyProperty> properties;
};

/// Little-endian scalar read with bounds checking against the buffer end.
double read_binary_scalar(const std::string& data, size_t& offset, PlyType t,
                          const std::string& path) {
  const size_t size = static_cast<size_t>(type_size(t));
  if (offset + size > data.size())
    fail(path + ": byte " + std::to_string(offset) +
         ": unexpected end of file");
  const char* p = data.data() + offset;
  offset += size;
  switch (t) {
    case PlyType::i8: return static_cast<double>(static_cast<std::int8_t>(*p));
    case PlyType::u8: return static_cast<double>(static_cast<std::uint8_t>(*p));
    case PlyType::i16: {
      std::int16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case PlyType::u16: {
      std::uint16_t v;
      std::memcpy(&v, p, 2);
      return v;
    }
    case PlyType::i32: {
      std::int32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::u32: {
      std::uint32_t v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::f32: {
      float v;
      std::memcpy(&v, p, 4);
      return v;
    }
    case PlyType::f64: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
  }
  return 0.0;
}

MeshData load_ply(const std::string& path, const std::string& data) {
  // Header: text lines up to and including "end_header".
  size_t cursor = 0;
  int line_no = 0;
  auto next_line = [&]() -> std::string {
    if (cursor >= data.size())
      fail(path + ": unexpected end of file inside header");
    const size_t eol = data.find('\n', cursor);
    const size_t end = (eol == std::string::npos) ? data.size() : eol;
    std::string line = data.substr(cursor, end - cursor);
    cursor = (eol == std::string::npos) ? data.size() : eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  auto where = [&]() { return path + ":" + std::to_string(line_no); };

  if (trim(next_line()) != "ply") fail(path + ":1: missing 'ply' magic");
  bool binary = false;
  bool format_seen = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const std::string line = next_line();
    const auto tokens = split_tokens(line);
    if (tokens.empty() || tokens[0] == "comment" || tokens[0] == "obj_info")
      continue;
    if (tokens[0] == "format") {
      if (tokens.size() != 3 || tokens[2] != "1.0")
        fail(where() + ": malformed format line '" + line + "'");
      if (tokens[1] == "ascii")
        binary = false;
      else if (tokens[1] == "binary_little_endian")
        binary = true;
      else
        fail(where() + ": unsupported format '" + tokens[1] +
             "' (ascii and binary_little_endian are supported)");
      format_seen = true;
    } else if (tokens[0] == "element") {
      if (tokens.size() != 3) fail(where() + ": malformed element line");
      PlyElement element;
      element.name = tokens[1];
      element.count = parse_long(tokens[2], where());
      if (element.count < 0) fail(where() + ": negative element count");
      elements.push_back(element);
    } else if (tokens[0] == "property") {
      if (elements.empty()) fail(where() + ": property before any element");
      PlyProperty property;
      if (tokens.size() == 5 && tokens[1] == "list") {
        property.is_list = true;
        property.count_type = parse_ply_type(tokens[2], where());
        property.value_type = parse_ply_type(tokens[3], where());
        property.name = tokens[4];
        if (property.count_type == PlyType::f32 ||
            property.count_type == PlyType::f64)
          fail(where() + ": list count type must be an integer");
      } else if (tokens.size() == 3) {
        property.value_type = parse_ply_type(tokens[1], where());
        property.name = tokens[2];
      } else {
        fail(where() + ": malformed property line '" + line + "'");
      }
      elements.back().properties.push_back(property);
    } else if (tokens[0] == "end_header") {
      break;
    } else {
      fail(where() + ": unknown header keyword '" + tokens[0] + "'");
    }
  }
  if (!format_seen) fail(path + ": header has no format line");

  MeshData mesh;
  size_t offset = cursor;  // binary payload position
  auto ascii_line_tokens = [&]() {
    std::string line;
    do {
      line = trim(next_line());
    } while (line.empty());
    return split_tokens(line);
  };

  for (const PlyElement& element : elements) {
    const bool is_vertex = element.name == "vertex";
    const bool is_face = element.name == "face";
    int x_at = -1, y_at = -1, z_at = -1, list_at = -1;
    for (size_t i = 0; i < element.properties.size(); ++i) {
      const PlyProperty& property = element.properties[i];
      if (is_vertex && !property.is_list) {
        if (property.name == "x") x_at = static_cast<int>(i);
        if (property.name == "y") y_at = static_cast<int>(i);
        if (property.name == "z") z_at = static_cast<int>(i);
      }
      if (is_face && property.is_list &&
          (property.name == "vertex_indices" || property.name == "vertex_index"))
        list_at = static_cast<int>(i);
    }
    if (is_vertex && (x_at < 0 || y_at < 0 || z_at < 0))
      fail(path + ": vertex element lacks x/y/z properties");
    if (is_face && list_at < 0)
      fail(path + ": face element lacks a vertex_indices list");

    for (long row = 0; row < element.count; ++row) {
      std::vector<std::string> tokens;
      size_t token_at = 0;
      if (!binary) tokens = ascii_line_tokens();
      auto take_scalar = [&](PlyType t) -> double {
        if (binary) return read_binary_scalar(data, offset, t, path);
        if (token_at >= tokens.size())
          fail(where() + ": expected more values on this line");
        return parse_double(tokens[token_at++], where());
      };

      Vec3 vertex = Vec3::Zero();
      std::array<int, 3> face{};
      for (size_t i = 0; i < element.properties.size(); ++i) {
        const PlyProperty& property = element.properties[i];
        if (!property.is_list) {
          const double value = take_scalar(property.value_type);
          if (static_cast<int>(i) == x_at) vertex[0] = value;
          if (static_cast<int>(i) == y_at) vertex[1] = value;
          if (static_cast<int>(i) == z_at) vertex[2] = value;
          continue;
        }
        const double count_value = take_scalar(property.count_type);
        const long n = static_cast<long>(count_value);
        if (static_cast<int>(i) == list_at) {
          if (n != 3)
            fail(path + ": face " + std::to_string(row) +
                 ": only triangles are supported (got " + std::to_string(n) +
                 " indices)");
          for (int c = 0; c < 3; ++c) {
            const double idx = take_scalar(property.value_type);
            face[c] = static_cast<int>(idx);
          }
        } else {
          for (long v = 0; v < n; ++v) take_scalar(property.value_type);
        }
      }
      if (is_vertex) {
        if (!vertex.allFinite())
          fail(binary ? path + ": byte " + std::to_string(offset) +
                            ": non-finite vertex coordinate"
                      : where() + ": non-finite vertex coordinate");
        mesh.vertices.push_back(vertex);
      }
      if (is_face) mesh.faces.push_back(face);
    }
  }
  return mesh;
}

MeshData load_obj(const std::string& path, const std::string& data) {
  MeshData mesh;
  std::istringstream stream(data);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto tokens = split_tokens(line);
    if (tokens.empty() || tokens[0][0] == '#') continue;
    if (tokens[0] == "v") {
      if (tokens.size() < 4)
        fail(where + ": vertex line has " + std::to_string(tokens.size() - 1) +
             " coordinates (need 3)");
      Vec3 vertex(parse_double(tokens[1], where), parse_double(tokens[2], where),
                  parse_double(tokens[3], where));
      if (!vertex.allFinite()) fail(where + ": non-finite vertex coordinate");
      mesh.vertices.push_back(vertex);
    } else if (tokens[0] == "f") {
      if (tokens.size() != 4)
        fail(where + ": only triangle faces are supported (got " +
             std::to_string(tokens.size() - 1) + " corners)");
      std::array<int, 3> face{};
      for (int c = 0; c < 3; ++c) {
        // "f v", "f v/t", "f v/t/n", "f v//n": the vertex id leads.
        const std::string& ref = tokens[c + 1];
        const long id = parse_long(ref.substr(0, ref.find('/')), where);
        if (id < 1)
          fail(where + ": vertex reference " + std::to_string(id) +
               " must be positive (1-based)");
        face[c] = static_cast<int>(id - 1);
      }
      mesh.faces.push_back(face);
    }
    // Every other prefix (vn, vt, o, g, s, mtllib, usemtl, ...) is skipped.
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// CRC-32 (IEEE 802.3, polynomial 0xEDB88320, as in zip/png).

std::uint32_t crc32(const std::string& bytes) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k)
        c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = 0xFFFFFFFFu;
  for (unsigned char byte : bytes)
    crc = table[(crc ^ byte) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

void append_u32(std::string& out, std::uint32_t value) {
  char buffer[4];
  std::memcpy(buffer, &value, 4);
  out.append(buffer, 4);
}

void append_i32s(std::string& out, const int* values, size_t count) {
  for (size_t i = 0; i < count; ++i) {
    const std::int32_t v = values[i];
    char buffer[4];
    std::memcpy(buffer, &v, 4);
    out.append(buffer, 4);
  }
}

void append_f64s(std::string& out, const double* values, size_t count) {
  out.append(reinterpret_cast<const char*>(values), count * 8);
}

struct Reader {
  const std::string& data;
  size_t offset = 0;
  const std::string& path;

  void need(size_t bytes, const char* what) const {
    if (offset + bytes > data.size())
      fail(path + ": payload ends inside " + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, data.data() + offset, 4);
    offset += 4;
    return v;
  }
  void i32s(int* out, size_t count, const char* what) {
    need(4 * count, what);
    for (size_t i = 0; i < count; ++i) {
      std::int32_t v;
      std::memcpy(&v, data.data() + offset + 4 * i, 4);
      out[i] = v;
    }
    offset += 4 * count;
  }
  void f64s(double* out, size_t count, const char* what) {
    need(8 * count, what);
    std::memcpy(out, data.data() + offset, 8 * count);
    offset += 8 * count;
  }
};

constexpr char kModelMagic[4] = {'M', 'C', 'S', 'M'};
constexpr std::uint32_t kModelVersion = 1;

// ---------------------------------------------------------------------------
// Config document

struct ConfigKey {
  const char* name;
  enum Kind { real, integer, boolean, text } kind;
  size_t offset;
};

#define MCS_FIELD(member) offsetof(RunConfig, member)
const ConfigKey kConfigKeys[] = {
    {"objective.lambda_skin", ConfigKey::real, MCS_FIELD(objective.lambda_skin)},
    {"objective.lambda_outside", ConfigKey::real,
     MCS_FIELD(objective.lambda_outside)},
    {"objective.lambda_fit", ConfigKey::real, MCS_FIELD(objective.lambda_fit)},
    {"objective.lambda_cpl", ConfigKey::real, MCS_FIELD(objective.lambda_cpl)},
    {"objective.lambda_prior", ConfigKey::real,
     MCS_FIELD(objective.lambda_prior)},
    {"objective.sigma_skin", ConfigKey::real, MCS_FIELD(objective.sigma_skin)},
    {"objective.sigma_fit", ConfigKey::real, MCS_FIELD(objective.sigma_fit)},
    {"objective.logistic_k", ConfigKey::real, MCS_FIELD(objective.logistic_k)},
    {"objective.logistic_d0", ConfigKey::real,
     MCS_FIELD(objective.logistic_d0)},
    {"solver.initial_radius", ConfigKey::real,
     MCS_FIELD(solver.initial_radius)},
    {"solver.min_radius", ConfigKey::real, MCS_FIELD(solver.min_radius)},
    {"solver.max_inner_iterations", ConfigKey::integer,
     MCS_FIELD(solver.max_inner_iterations)},
    {"solver.outer_refreshes", ConfigKey::integer,
     MCS_FIELD(solver.outer_refreshes)},
    {"solver.relative_decrease", ConfigKey::real,
     MCS_FIELD(solver.relative_decrease)},
    {"solver.gradient_tolerance", ConfigKey::real,
     MCS_FIELD(solver.gradient_tolerance)},
    {"pipeline.fusion_budget", ConfigKey::integer, MCS_FIELD(fusion_budget)},
    {"output.emit_meshes", ConfigKey::boolean, MCS_FIELD(emit_meshes)},
    {"output.emit_poses", ConfigKey::boolean, MCS_FIELD(emit_poses)},
    {"output.dir", ConfigKey::text, MCS_FIELD(out_dir)},
};
#undef MCS_FIELD

std::string format_double(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

}  // namespace

MeshData load_mesh(const std::string& path) {
  const std::string data = read_file(path);
  const std::filesystem::path fs(path);
  const std::string ext = fs.extension().string();
  if (ext == ".ply") return load_ply(path, data);
  if (ext == ".obj") return load_obj(path, data);
  fail(path + ": unsupported extension '" + ext + "' (.ply or .obj)");
}

void save_ply(const std::string& path, const MeshData& mesh, bool binary) {
  std::string out = "ply\n";
  out += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  out += "element vertex " + std::to_string(mesh.vertices.size()) + "\n";
  out += "property double x\nproperty double y\nproperty double z\n";
  if (!mesh.faces.empty()) {
    out += "element face " + std::to_string(mesh.faces.size()) + "\n";
    out += "property list uchar int vertex_indices\n";
  }
  out += "end_header\n";
  if (binary) {
    for (const Vec3& v : mesh.vertices) append_f64s(out, v.data(), 3);
    for (const auto& f : mesh.faces) {
      out.push_back(static_cast<char>(3));
      append_i32s(out, f.data(), 3);
    }
  } else {
    char line[128];
    for (const Vec3& v : mesh.vertices) {
      std::snprintf(line, sizeof(line), "%.17g %.17g %.17g\n", v[0], v[1],
                    v[2]);
      out += line;
    }
    for (const auto& f : mesh.faces) {
      std::snprintf(line, sizeof(line), "3 %d %d %d\n", f[0], f[1], f[2]);
      out += line;
    }
  }
  write_file(path, out);
}

Scan load_scan(const std::string& path, double scale) {
  if (scale <= 0.0) fail(path + ": scale must be positive");
  MeshData mesh = load_mesh(path);
  if (mesh.vertices.empty()) fail(path + ": no points");

  Scan scan;
  scan.points = std::move(mesh.vertices);
  if (scale != 1.0)
    for (Vec3& p : scan.points) p *= scale;

  std::vector<PointLabel> labels(scan.points.size(), PointLabel::cloth);
  const std::string label_path = path + ".labels";
  if (std::filesystem::exists(label_path)) {
    const auto tokens = split_tokens(read_file(label_path));
    if (tokens.size() != scan.points.size())
      fail(label_path + ": " + std::to_string(tokens.size()) +
           " labels for " + std::to_string(scan.points.size()) + " points");
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == "skin")
        labels[i] = PointLabel::skin;
      else if (tokens[i] == "cloth")
        labels[i] = PointLabel::cloth;
      else
        fail(label_path + ": token " + std::to_string(i) + " is '" +
             tokens[i] + "' (expected skin or cloth)");
    }
  }
  scan.skin_weights = VectorXd::Zero(scan.points.size());
  for (size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == PointLabel::skin) scan.skin_weights[i] = 1.0;
  scan.labels = std::move(labels);
  scan.validate();
  return scan;
}

void save_labels(const std::string& path,
                 const std::vector<PointLabel>& labels) {
  std::string out;
  for (PointLabel label : labels)
    out += label == PointLabel::skin ? "skin\n" : "cloth\n";
  write_file(path, out);
}

void save_model(const std::string& path, const BodyModel& model) {
  model.validate();
  const std::uint32_t n = model.vertex_count();
  const std::uint32_t k = model.joint_count();
  const std::uint32_t b = model.shape_dim();
  const std::uint32_t f = static_cast<std::uint32_t>(model.faces.size());

  std::string out(kModelMagic, 4);
  append_u32(out, kModelVersion);
  append_u32(out, n);
  append_u32(out, k);
  append_u32(out, b);
  append_u32(out, f);
  for (const Vec3& v : model.rest_template) append_f64s(out, v.data(), 3);
  for (const auto& face : model.faces) append_i32s(out, face.data(), 3);
  append_f64s(out, model.shape_basis.data(), model.shape_basis.size());
  append_f64s(out, model.pose_basis.data(), model.pose_basis.size());
  append_f64s(out, model.joint_regressor.data(), model.joint_regressor.size());
  append_f64s(out, model.skin_weights.data(), model.skin_weights.size());
  append_i32s(out, model.kinematic_parents.data(), k);
  append_f64s(out, model.pose_prior_mean.data(), model.pose_prior_mean.size());
  append_f64s(out, model.pose_prior_cov.data(), model.pose_prior_cov.size());
  append_i32s(out, model.part_labels.data(), n);
  append_u32(out, crc32(out));
  write_file(path, out);
}

BodyModel load_model(const std::string& path) {
  const std::string data = read_file(path);
  if (data.size() < 24 + 4) fail(path + ": too short for a model container");
  if (std::memcmp(data.data(), kModelMagic, 4) != 0)
    fail(path + ": bad magic (not a model container)");

  std::uint32_t stored = 0;
  std::memcpy(&stored, data.data() + data.size() - 4, 4);
  const std::uint32_t computed = crc32(data.substr(0, data.size() - 4));
  if (stored != computed)
    fail(path + ": checksum mismatch (file truncated or corrupted)");

  Reader reader{data, 4, path};
  const std::uint32_t version = reader.u32("version");
  if (version != kModelVersion)
    fail(path + ": unsupported version " + std::to_string(version));
  const std::uint32_t n = reader.u32("dimensions");
  const std::uint32_t k = reader.u32("dimensions");
  const std::uint32_t b = reader.u32("dimensions");
  const std::uint32_t f = reader.u32("dimensions");
  if (n == 0 || k == 0) fail(path + ": empty model (N or K is zero)");
  if (n > 10'000'000 || k > 10'000 || b > 10'000 || f > 30'000'000)
    fail(path + ": implausible dimensions");

  BodyModel model;
  model.rest_template.resize(n);
  for (auto& v : model.rest_template)
    reader.f64s(v.data(), 3, "rest_template");
  model.faces.resize(f);
  for (auto& face : model.faces) reader.i32s(face.data(), 3, "faces");
  model.shape_basis.resize(3 * n, b);
  reader.f64s(model.shape_basis.data(), model.shape_basis.size(),
              "shape_basis");
  model.pose_basis.resize(3 * n, 9 * (k - 1));
  reader.f64s(model.pose_basis.data(), model.pose_basis.size(), "pose_basis");
  model.joint_regressor.resize(k, n);
  reader.f64s(model.joint_regressor.data(), model.joint_regressor.size(),
              "joint_regressor");
  model.skin_weights.resize(n, k);
  reader.f64s(model.skin_weights.data(), model.skin_weights.size(),
              "skin_weights");
  model.kinematic_parents.resize(k);
  reader.i32s(model.kinematic_parents.data(), k, "kinematic_parents");
  model.pose_prior_mean.resize(3 * k);
  reader.f64s(model.pose_prior_mean.data(), 3 * k, "pose_prior_mean");
  model.pose_prior_cov.resize(3 * k, 3 * k);
  reader.f64s(model.pose_prior_cov.data(), model.pose_prior_cov.size(),
              "pose_prior_cov");
  model.part_labels.resize(n);
  reader.i32s(model.part_labels.data(), n, "part_labels");
  if (reader.offset != data.size() - 4)
    fail(path + ": payload size inconsistent with declared dimensions");

  try {
    model.validate();
  } catch (const std::exception& err) {
    fail(path + ": " + err.what());
  }
  return model;
}

void save_pose_records(const std::string& path,
                       const std::vector<PoseRecord>& records) {
  std::string out;
  char token[32];
  for (const PoseRecord& record : records) {
    out += std::to_string(record.frame);
    const VectorXd& rotations = record.pose.joint_rotations;
    for (int i = 0; i < rotations.size(); ++i) {
      std::snprintf(token, sizeof(token), " %.17g", rotations[i]);
      out += token;
    }
    for (int c = 0; c < 3; ++c) {
      std::snprintf(token, sizeof(token), " %.17g",
                    record.pose.translation[c]);
      out += token;
    }
    out += "\n";
  }
  write_file(path, out);
}

std::vector<PoseRecord> load_pose_records(const std::string& path) {
  const std::string data = read_file(path);
  std::istringstream stream(data);
  std::string line;
  int line_no = 0;
  std::vector<PoseRecord> records;
  size_t expected_tokens = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    const auto tokens = split_tokens(line);
    if (tokens.empty()) continue;
    if (expected_tokens == 0) {
      if (tokens.size() < 7 || (tokens.size() - 4) % 3 != 0)
        fail(where + ": expected frame index plus 3K+3 floats, got " +
             std::to_string(tokens.size()) + " tokens");
      expected_tokens = tokens.size();
    } else if (tokens.size() != expected_tokens) {
      fail(where + ": " + std::to_string(tokens.size()) +
           " tokens but earlier lines have " + std::to_string(expected_tokens));
    }
    PoseRecord record;
    record.frame = static_cast<int>(parse_long(tokens[0], where));
    const int joints = static_cast<int>((tokens.size() - 4) / 3);
    record.pose.joint_rotations.resize(3 * joints);
    for (int i = 0; i < 3 * joints; ++i)
      record.pose.joint_rotations[i] = parse_double(tokens[1 + i], where);
    for (int c = 0; c < 3; ++c)
      record.pose.translation[c] =
          parse_double(tokens[1 + 3 * joints + c], where);
    records.push_back(std::move(record));
  }
  return records;
}

void save_vector(const std::string& path, const VectorXd& values) {
  std::string out;
  char line[32];
  for (int i = 0; i < values.size(); ++i) {
    std::snprintf(line, sizeof(line), "%.17g\n", values[i]);
    out += line;
  }
  write_file(path, out);
}

VectorXd load_vector(const std::string& path) {
  const auto tokens = split_tokens(read_file(path));
  VectorXd values(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i)
    values[i] =
        parse_double(tokens[i], path + ": value " + std::to_string(i));
  return values;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::string where = "config:" + std::to_string(line_no);
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(where + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    const ConfigKey* found = nullptr;
    for (const ConfigKey& candidate : kConfigKeys)
      if (key == candidate.name) found = &candidate;
    if (!found) fail(where + ": unknown key '" + key + "'");

    char* base = reinterpret_cast<char*>(&config);
    switch (found->kind) {
      case ConfigKey::real:
        *reinterpret_cast<double*>(base + found->offset) =
            parse_double(value, where);
        break;
      case ConfigKey::integer:
        *reinterpret_cast<int*>(base + found->offset) =
            static_cast<int>(parse_long(value, where));
        break;
      case ConfigKey::boolean:
        if (value == "true")
          *reinterpret_cast<bool*>(base + found->offset) = true;
        else if (value == "false")
          *reinterpret_cast<bool*>(base + found->offset) = false;
        else
          fail(where + ": '" + value + "' is not a boolean (true/false)");
        break;
      case ConfigKey::text:
        *reinterpret_cast<std::string*>(base + found->offset) = value;
        break;
    }
  }
  return config;
}

std::string serialize_run_config(const RunConfig& config) {
  std::string out;
  const char* base = reinterpret_cast<const char*>(&config);
  for (const ConfigKey& key : kConfigKeys) {
    out += key.name;
    out += " = ";
    switch (key.kind) {
      case ConfigKey::real:
        out += format_double(*reinterpret_cast<const double*>(base + key.offset));
        break;
      case ConfigKey::integer:
        out += std::to_string(*reinterpret_cast<const int*>(base + key.offset));
        break;
      case ConfigKey::boolean:
        out += *reinterpret_cast<const bool*>(base + key.offset) ? "true"
                                                                 : "false";
        break;
      case ConfigKey::text:
        out += *reinterpret_cast<const std::string*>(base + key.offset);
        break;
    }
    out += "\n";
  }
  return out;
}

RunConfig load_run_config(const std::string& path) {
  try {
    return parse_run_config(read_file(path));
  } catch (const std::exception& err) {
    fail(path + ": " + err.what());
  }
}

}  // namespace mcs
