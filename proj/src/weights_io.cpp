#include "esdnet/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "esdnet/common.hpp"

namespace esdnet {

namespace {

constexpr char kMagic[4] = {'E', 'S', 'D', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(std::uint8_t(v));
  buf.push_back(std::uint8_t(v >> 8));
  buf.push_back(std::uint8_t(v >> 16));
  buf.push_back(std::uint8_t(v >> 24));
}

struct Reader {
  const std::uint8_t* p;
  std::size_t len;
  std::size_t off = 0;
  const std::string& path;

  void need(std::size_t n) const {
    if (off + n > len)
      throw DataError("weights file " + path + " is truncated");
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = std::uint32_t(p[off]) | std::uint32_t(p[off + 1]) << 8 |
                            std::uint32_t(p[off + 2]) << 16 |
                            std::uint32_t(p[off + 3]) << 24;
    off += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return p[off++];
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p + off), n);
    off += n;
    return s;
  }
};

}  // namespace

void save_weights(const std::string& path, const std::vector<std::string>& names,
                  const std::vector<Tensor>& values) {
  if (names.size() != values.size())
    throw ContractError("save_weights: name/value count mismatch");
  std::vector<std::uint8_t> buf;
  buf.insert(buf.end(), kMagic, kMagic + 4);
  put_u32(buf, kVersion);
  put_u32(buf, std::uint32_t(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const std::string& name = names[i];
    const Tensor& t = values[i];
    put_u32(buf, std::uint32_t(name.size()));
    buf.insert(buf.end(), name.begin(), name.end());
    buf.push_back(0);  // dtype f32
    buf.push_back(std::uint8_t(t.rank()));
    for (int d : t.shape) put_u32(buf, std::uint32_t(d));
    for (float v : t.data) put_u32(buf, std::bit_cast<std::uint32_t>(v));
  }
  const std::uint32_t crc = std::uint32_t(
      crc32(crc32(0L, Z_NULL, 0), buf.data(), uInt(buf.size())));
  put_u32(buf, crc);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp + " for writing");
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size()));
    if (!out) {
      std::remove(tmp.c_str());
      throw DataError("failed writing " + tmp);
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw DataError("failed to move " + tmp + " into place");
  }
}

std::vector<NamedTensor> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open weights file " + path);
  const std::streamsize size = in.tellg();
  if (size < 16) throw DataError("weights file " + path + " is truncated");
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(size));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()), size);
  if (!in) throw DataError("failed reading weights file " + path);

  Reader r{buf.data(), buf.size() - 4, 0, path};
  const std::uint32_t stored = std::uint32_t(buf[buf.size() - 4]) |
                               std::uint32_t(buf[buf.size() - 3]) << 8 |
                               std::uint32_t(buf[buf.size() - 2]) << 16 |
                               std::uint32_t(buf[buf.size() - 1]) << 24;
  const std::uint32_t computed = std::uint32_t(
      crc32(crc32(0L, Z_NULL, 0), buf.data(), uInt(buf.size() - 4)));
  if (stored != computed)
    throw DataError("weights file " + path + " failed its CRC check");

  if (r.str(4) != std::string(kMagic, 4))
    throw DataError(path + " is not a weights file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw DataError("weights file " + path + " has unsupported version " +
                    std::to_string(version));
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> entries;
  entries.reserve(count);
  std::unordered_set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    std::string name = r.str(name_len);
    if (!seen.insert(name).second)
      throw DataError("weights file " + path + " repeats entry " + name);
    const std::uint8_t dtype = r.u8();
    if (dtype != 0)
      throw DataError("entry " + name + " has unsupported dtype tag " +
                      std::to_string(dtype));
    const std::uint8_t ndim = r.u8();
    std::vector<int> shape(ndim);
    for (std::uint8_t d = 0; d < ndim; ++d) {
      const std::uint32_t e = r.u32();
      if (e == 0 || e > 1u << 24)
        throw DataError("entry " + name + " has invalid extent");
      shape[d] = int(e);
    }
    Tensor t(shape);
    for (float& v : t.data) v = std::bit_cast<float>(r.u32());
    entries.push_back({std::move(name), std::move(t)});
  }
  if (r.off != r.len)
    throw DataError("weights file " + path + " has trailing bytes");
  return entries;
}

void load_into(const std::string& path, const std::vector<std::string>& names,
               std::vector<Tensor>& values) {
  if (names.size() != values.size())
    throw ContractError("load_into: name/value count mismatch");
  std::vector<NamedTensor> entries = load_weights(path);
  std::unordered_map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < entries.size(); ++i) lookup[entries[i].name] = i;

  std::vector<Tensor> staged;
  staged.reserve(names.size());
  std::unordered_set<std::string> used;
  for (std::size_t i = 0; i < names.size(); ++i) {
    auto it = lookup.find(names[i]);
    if (it == lookup.end())
      throw DataError("weights file " + path + " is missing parameter " + names[i]);
    Tensor& loaded = entries[it->second].value;
    if (loaded.shape != values[i].shape)
      throw DataError("parameter " + names[i] + " has shape " + shape_str(loaded) +
                      " but the model expects " + shape_str(values[i]));
    used.insert(names[i]);
    staged.push_back(std::move(loaded));
  }
  for (const NamedTensor& e : entries)
    if (!used.count(e.name))
      throw DataError("weights file " + path + " has unexpected parameter " + e.name);
  values = std::move(staged);
}

}  // namespace esdnet
