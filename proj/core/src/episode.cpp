#include "dtp/episode.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace dtp {

namespace {

using nlohmann::json;

void append_f64(std::string& buf, const double* p, size_t n) {
  static_assert(sizeof(double) == 8);
  const size_t off = buf.size();
  buf.resize(off + 8 * n);
  std::memcpy(buf.data() + off, p, 8 * n);
}

struct ArrayDecl {
  std::string name;
  std::string dtype;  // "f64" | "u8"
  std::vector<int64_t> shape;
  int64_t bytes() const {
    int64_t n = dtype == "f64" ? 8 : 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
};

}  // namespace

void EpisodeRecord::validate() const {
  if (schema_id.empty()) throw std::invalid_argument("episode: empty schema id");
  if (z.empty()) throw std::invalid_argument("episode: zero length");
  if (a.size() != z.size() || images.size() != z.size())
    throw std::invalid_argument("episode: z/a/images lengths differ");
  if (image_size < 1 || views < 1) throw std::invalid_argument("episode: bad image geometry");
  const size_t px = static_cast<size_t>(views) * image_size * image_size;
  for (const auto& im : images)
    if (im.size() != px) throw std::invalid_argument("episode: image byte count mismatch");
  for (size_t t = 0; t < z.size(); ++t)
    for (int i = 0; i < slots::kTotal; ++i) {
      if (z[t].mask[static_cast<size_t>(i)] == 0 && z[t].values[static_cast<size_t>(i)] != 0.0)
        throw std::invalid_argument("episode: nonzero masked z slot");
      if (a[t].mask[static_cast<size_t>(i)] == 0 && a[t].values[static_cast<size_t>(i)] != 0.0)
        throw std::invalid_argument("episode: nonzero masked action slot");
    }
}

void write_episode(const std::string& path, const EpisodeRecord& e) {
  e.validate();
  const int64_t L = e.length();
  const int64_t px = static_cast<int64_t>(e.views) * e.image_size * e.image_size;

  json header;
  header["version"] = kEpisodeFormatVersion;
  header["schema"] = e.schema_id;
  header["task"] = e.task;
  header["expert_mode"] = e.expert_mode;
  header["frequency_hz"] = e.frequency_hz;
  header["image_size"] = e.image_size;
  header["views"] = e.views;
  header["success"] = e.success;
  header["length"] = L;
  header["instructions"] = {{"original", e.instructions.original},
                            {"expanded", e.instructions.expanded},
                            {"simplified", e.instructions.simplified}};
  header["arrays"] = json::array({
      json{{"name", "z_values"}, {"dtype", "f64"}, {"shape", {L, slots::kTotal}}},
      json{{"name", "z_mask"}, {"dtype", "u8"}, {"shape", {L, slots::kTotal}}},
      json{{"name", "a_values"}, {"dtype", "f64"}, {"shape", {L, slots::kTotal}}},
      json{{"name", "a_mask"}, {"dtype", "u8"}, {"shape", {L, slots::kTotal}}},
      json{{"name", "images"}, {"dtype", "u8"}, {"shape", {L, e.views, e.image_size, e.image_size}}},
  });

  std::string buf = header.dump();
  buf.push_back('\n');
  for (const auto& u : e.z) append_f64(buf, u.values.data(), u.values.size());
  for (const auto& u : e.z) buf.append(reinterpret_cast<const char*>(u.mask.data()), u.mask.size());
  for (const auto& u : e.a) append_f64(buf, u.values.data(), u.values.size());
  for (const auto& u : e.a) buf.append(reinterpret_cast<const char*>(u.mask.data()), u.mask.size());
  for (const auto& im : e.images)
    buf.append(reinterpret_cast<const char*>(im.data()), im.size());
  (void)px;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("short write: " + path);
}

EpisodeRecord read_episode(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for read: " + path);
  std::string header_line;
  if (!std::getline(f, header_line)) throw std::runtime_error("missing episode header: " + path);
  json header = json::parse(header_line);
  if (!header.contains("version") || header["version"].get<int>() != kEpisodeFormatVersion)
    throw std::runtime_error("unsupported episode format version in " + path);

  EpisodeRecord e;
  e.schema_id = header.at("schema").get<std::string>();
  e.task = header.at("task").get<std::string>();
  e.expert_mode = header.at("expert_mode").get<std::string>();
  e.frequency_hz = header.at("frequency_hz").get<int>();
  e.image_size = header.at("image_size").get<int>();
  e.views = header.at("views").get<int>();
  e.success = header.at("success").get<bool>();
  e.instructions.original = header.at("instructions").at("original").get<std::string>();
  e.instructions.expanded =
      header.at("instructions").at("expanded").get<std::vector<std::string>>();
  e.instructions.simplified = header.at("instructions").at("simplified").get<std::string>();
  const int64_t L = header.at("length").get<int64_t>();
  if (L < 1) throw std::runtime_error("episode header declares zero length: " + path);

  std::vector<ArrayDecl> decls;
  for (const auto& a : header.at("arrays")) {
    ArrayDecl d;
    d.name = a.at("name").get<std::string>();
    d.dtype = a.at("dtype").get<std::string>();
    d.shape = a.at("shape").get<std::vector<int64_t>>();
    if (d.dtype != "f64" && d.dtype != "u8")
      throw std::runtime_error("unknown dtype in episode header: " + d.dtype);
    decls.push_back(std::move(d));
  }

  std::string payload((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  int64_t total = 0;
  for (const auto& d : decls) total += d.bytes();
  if (static_cast<int64_t>(payload.size()) != total)
    throw std::runtime_error("episode payload size mismatch: declared " + std::to_string(total) +
                             " got " + std::to_string(payload.size()));

  e.z.assign(static_cast<size_t>(L), UnifiedVector{});
  e.a.assign(static_cast<size_t>(L), UnifiedVector{});
  e.images.assign(static_cast<size_t>(L),
                  std::vector<uint8_t>(static_cast<size_t>(e.views) * e.image_size * e.image_size));

  const char* p = payload.data();
  auto take = [&](void* dst, size_t n) {
    std::memcpy(dst, p, n);
    p += n;
  };
  for (const auto& d : decls) {
    if (d.name == "z_values")
      for (auto& u : e.z) take(u.values.data(), 8 * u.values.size());
    else if (d.name == "z_mask")
      for (auto& u : e.z) take(u.mask.data(), u.mask.size());
    else if (d.name == "a_values")
      for (auto& u : e.a) take(u.values.data(), 8 * u.values.size());
    else if (d.name == "a_mask")
      for (auto& u : e.a) take(u.mask.data(), u.mask.size());
    else if (d.name == "images")
      for (auto& im : e.images) take(im.data(), im.size());
    else
      p += d.bytes();  // unknown trailing array: skip, size already verified
  }
  e.validate();
  return e;
}

}  // namespace dtp
