#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wsext {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(ByteView b) { return std::string(b.begin(), b.end()); }

/// Upper-case hex, the form the KeyToken hexBinary encoding emits.
std::string to_hex(ByteView data);
/// Accepts either case; nullopt on odd length or a non-hex digit.
std::optional<Bytes> from_hex(std::string_view text);

std::string base64_encode(ByteView data);
/// Canonical base64 only: padded, no whitespace, zero pad bits.
std::optional<Bytes> base64_decode(std::string_view text);

/// Owning byte buffer that is wiped when released.
class SecretBytes {
 public:
  SecretBytes() = default;
  explicit SecretBytes(Bytes data) : data_(std::move(data)) {}
  SecretBytes(const SecretBytes& other) : data_(other.data_) {}
  SecretBytes(SecretBytes&& other) noexcept : data_(std::move(other.data_)) {}
  SecretBytes& operator=(const SecretBytes& other);
  SecretBytes& operator=(SecretBytes&& other) noexcept;
  ~SecretBytes();

  ByteView view() const noexcept { return data_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t size() const noexcept { return data_.size(); }
  const Bytes& bytes() const noexcept { return data_; }

  friend bool operator==(const SecretBytes& a, const SecretBytes& b) { return a.data_ == b.data_; }

 private:
  void wipe() noexcept;
  Bytes data_;
};

}  // namespace wsext
