#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sqn {

// Flat container of named arrays (doubles, 64-bit ints, raw bytes) with a
// bit-exact round trip. Little-endian on-disk layout:
//   magic "SQNB1\n", then per entry:
//   u16 name length | name | u8 kind (0=f64, 1=i64, 2=bytes) | u64 count | payload
class Checkpoint {
 public:
  using Entry = std::variant<std::vector<double>, std::vector<std::int64_t>,
                             std::string>;

  void put_doubles(const std::string& name, std::vector<double> v) {
    put(name, Entry(std::move(v)));
  }
  void put_ints(const std::string& name, std::vector<std::int64_t> v) {
    put(name, Entry(std::move(v)));
  }
  void put_bytes(const std::string& name, std::string v) {
    put(name, Entry(std::move(v)));
  }
  void put_double(const std::string& name, double v) {
    put_doubles(name, {v});
  }
  void put_int(const std::string& name, std::int64_t v) { put_ints(name, {v}); }

  bool has(const std::string& name) const { return find(name) != nullptr; }

  const std::vector<double>& doubles(const std::string& name) const {
    return std::get<std::vector<double>>(fetch(name, 0));
  }
  const std::vector<std::int64_t>& ints(const std::string& name) const {
    return std::get<std::vector<std::int64_t>>(fetch(name, 1));
  }
  const std::string& bytes(const std::string& name) const {
    return std::get<std::string>(fetch(name, 2));
  }
  double scalar(const std::string& name) const {
    const auto& v = doubles(name);
    if (v.size() != 1) throw std::runtime_error("checkpoint: not a scalar: " + name);
    return v[0];
  }
  std::int64_t integer(const std::string& name) const {
    const auto& v = ints(name);
    if (v.size() != 1) throw std::runtime_error("checkpoint: not a scalar: " + name);
    return v[0];
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for write: " + path);
    out.write(kMagic, 6);
    for (const auto& [name, entry] : entries_) {
      if (name.size() > 0xFFFF)
        throw std::runtime_error("checkpoint entry name too long");
      write_pod(out, static_cast<std::uint16_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      if (const auto* d = std::get_if<std::vector<double>>(&entry)) {
        write_pod(out, static_cast<std::uint8_t>(0));
        write_pod(out, static_cast<std::uint64_t>(d->size()));
        out.write(reinterpret_cast<const char*>(d->data()),
                  static_cast<std::streamsize>(d->size() * sizeof(double)));
      } else if (const auto* i = std::get_if<std::vector<std::int64_t>>(&entry)) {
        write_pod(out, static_cast<std::uint8_t>(1));
        write_pod(out, static_cast<std::uint64_t>(i->size()));
        out.write(reinterpret_cast<const char*>(i->data()),
                  static_cast<std::streamsize>(i->size() * sizeof(std::int64_t)));
      } else {
        const auto& b = std::get<std::string>(entry);
        write_pod(out, static_cast<std::uint8_t>(2));
        write_pod(out, static_cast<std::uint64_t>(b.size()));
        out.write(b.data(), static_cast<std::streamsize>(b.size()));
      }
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[6];
    in.read(magic, 6);
    if (!in || std::memcmp(magic, kMagic, 6) != 0)
      throw std::runtime_error("not a checkpoint file: " + path);
    Checkpoint ck;
    while (true) {
      std::uint16_t name_len;
      in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
      if (in.eof()) break;
      if (!in) throw std::runtime_error("truncated checkpoint: " + path);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      std::uint8_t kind;
      in.read(reinterpret_cast<char*>(&kind), 1);
      std::uint64_t count;
      in.read(reinterpret_cast<char*>(&count), sizeof(count));
      if (!in) throw std::runtime_error("truncated checkpoint: " + path);
      Entry entry;
      if (kind == 0) {
        std::vector<double> v(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        entry = std::move(v);
      } else if (kind == 1) {
        std::vector<std::int64_t> v(count);
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(count * sizeof(std::int64_t)));
        entry = std::move(v);
      } else if (kind == 2) {
        std::string v(count, '\0');
        in.read(v.data(), static_cast<std::streamsize>(count));
        entry = std::move(v);
      } else {
        throw std::runtime_error("unknown entry kind in checkpoint: " + path);
      }
      if (!in) throw std::runtime_error("truncated checkpoint: " + path);
      ck.entries_.emplace_back(std::move(name), std::move(entry));
    }
    return ck;
  }

 private:
  static constexpr const char* kMagic = "SQNB1\n";

  template <class T>
  static void write_pod(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }

  const Entry* find(const std::string& name) const {
    for (const auto& [n, e] : entries_)
      if (n == name) return &e;
    return nullptr;
  }

  const Entry& fetch(const std::string& name, std::size_t kind) const {
    const Entry* e = find(name);
    if (!e) throw std::runtime_error("checkpoint entry missing: " + name);
    if (e->index() != kind)
      throw std::runtime_error("checkpoint entry has wrong type: " + name);
    return *e;
  }

  void put(const std::string& name, Entry entry) {
    if (find(name)) throw std::runtime_error("duplicate checkpoint entry: " + name);
    entries_.emplace_back(name, std::move(entry));
  }

  std::vector<std::pair<std::string, Entry>> entries_;
};

}  // namespace sqn
