#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

#include "core/tensor.hpp"

namespace tauflow {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'U', 'F'};

uint64_t fnv1a(const uint8_t* p, size_t n) {
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  std::vector<uint8_t> bytes;
  size_t pos = 0;
  std::string path;

  void need(size_t n, const char* what) {
    if (pos + n > bytes.size())
      fail(ErrorCode::Format, path + ": truncated at byte " + std::to_string(pos) +
                                  " while reading " + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

Reader read_all(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open checkpoint: " + path);
  Reader r;
  r.path = path;
  f.seekg(0, std::ios::end);
  r.bytes.resize(static_cast<size_t>(f.tellg()));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(r.bytes.data()), static_cast<std::streamsize>(r.bytes.size()));
  if (!f) fail(ErrorCode::Io, "short read: " + path);
  return r;
}

void check_header(Reader& r) {
  r.need(4, "magic");
  if (std::memcmp(r.bytes.data(), kMagic, 4) != 0)
    fail(ErrorCode::Format, r.path + ": not a checkpoint (bad magic)");
  r.pos = 4;
  uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    fail(ErrorCode::Format, r.path + ": checkpoint version " + std::to_string(version) +
                                ", this build reads version " +
                                std::to_string(kCheckpointVersion));
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStoreT<float>& params,
                     const ModelConfig& cfg) {
  std::string config_text = config_to_json_text(cfg);
  std::string head;
  head.append(kMagic, 4);
  put_u32(head, kCheckpointVersion);
  put_u32(head, static_cast<uint32_t>(config_text.size()));
  head += config_text;

  std::string manifest;
  std::string payload;
  put_u32(manifest, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& p = params.at(i);
    put_u32(manifest, static_cast<uint32_t>(p.name.size()));
    manifest += p.name;
    put_u32(manifest, static_cast<uint32_t>(p.value.shape.size()));
    for (auto d : p.value.shape) put_u32(manifest, static_cast<uint32_t>(d));
    uint64_t offset = payload.size();
    uint64_t len = static_cast<uint64_t>(p.value.numel()) * 4;
    std::string raw(len, '\0');
    const float* src = p.value.data->data();
    for (int64_t j = 0; j < p.value.numel(); ++j) {
      uint32_t bits;
      std::memcpy(&bits, &src[j], 4);
      for (int byte = 0; byte < 4; ++byte)
        raw[static_cast<size_t>(j) * 4 + byte] = static_cast<char>((bits >> (8 * byte)) & 0xff);
    }
    put_u64(manifest, offset);
    put_u64(manifest, len);
    put_u64(manifest, fnv1a(reinterpret_cast<const uint8_t*>(raw.data()), raw.size()));
    payload += raw;
  }
  std::string tail;
  put_u64(tail, payload.size());

  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open for writing: " + path);
  f << head << manifest << tail << payload;
  if (!f) fail(ErrorCode::Io, "short write: " + path);
}

ModelConfig peek_checkpoint_config(const std::string& path) {
  Reader r = read_all(path);
  check_header(r);
  uint32_t clen = r.u32("config length");
  return config_from_json_text(r.str(clen, "config snapshot"));
}

ModelConfig load_checkpoint(const std::string& path, ParamStoreT<float>& params) {
  Reader r = read_all(path);
  check_header(r);
  uint32_t clen = r.u32("config length");
  ModelConfig cfg = config_from_json_text(r.str(clen, "config snapshot"));

  uint32_t count = r.u32("tensor count");
  if (count != params.size())
    fail(ErrorCode::Shape, path + ": checkpoint holds " + std::to_string(count) +
                               " tensors, model has " + std::to_string(params.size()));
  struct Entry {
    std::string name;
    Shape shape;
    uint64_t offset, len, checksum;
  };
  std::vector<Entry> entries(count);
  for (auto& e : entries) {
    uint32_t nlen = r.u32("name length");
    e.name = r.str(nlen, "tensor name");
    uint32_t rank = r.u32("rank");
    for (uint32_t d = 0; d < rank; ++d) e.shape.push_back(r.u32("dimension"));
    e.offset = r.u64("offset");
    e.len = r.u64("length");
    e.checksum = r.u64("checksum");
  }
  uint64_t payload_len = r.u64("payload length");
  size_t payload_start = r.pos;
  r.need(payload_len, "payload");
  for (const auto& e : entries) {
    if (e.offset + e.len > payload_len)
      fail(ErrorCode::Format, path + ": manifest entry " + e.name +
                                  " exceeds payload (offset " + std::to_string(e.offset) +
                                  " + " + std::to_string(e.len) + " > " +
                                  std::to_string(payload_len) + ")");
    auto* p = params.find(e.name);
    if (!p) fail(ErrorCode::Shape, path + ": checkpoint tensor " + e.name +
                                       " does not exist in this model configuration");
    if (p->value.shape != e.shape)
      fail(ErrorCode::Shape, path + ": shape conflict for " + e.name + ": checkpoint " +
                                 shape_str(e.shape) + " vs model " + shape_str(p->value.shape));
    if (e.len != static_cast<uint64_t>(p->value.numel()) * 4)
      fail(ErrorCode::Format, path + ": byte length of " + e.name +
                                  " disagrees with its shape");
    const uint8_t* raw = r.bytes.data() + payload_start + e.offset;
    if (fnv1a(raw, e.len) != e.checksum)
      fail(ErrorCode::Format, path + ": checksum mismatch in " + e.name + " (payload offset " +
                                  std::to_string(e.offset) + ")");
    float* dst = p->value.data->data();
    for (int64_t j = 0; j < p->value.numel(); ++j) {
      uint32_t bits = 0;
      for (int byte = 0; byte < 4; ++byte)
        bits |= static_cast<uint32_t>(raw[static_cast<size_t>(j) * 4 + byte]) << (8 * byte);
      std::memcpy(&dst[j], &bits, 4);
    }
  }
  return cfg;
}

}  // namespace tauflow
