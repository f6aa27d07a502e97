#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nsb {

enum class FormatErrorKind {
    bad_magic,
    truncated_payload,
    version_mismatch,
    malformed,
};

std::string_view format_error_name(FormatErrorKind kind);

/// Raised by every container decoder (NSBW, NSBC, NSBP, NSBD).
class FormatError : public std::runtime_error {
public:
    FormatError(FormatErrorKind kind, const std::string& what);
    FormatErrorKind kind() const noexcept { return kind_; }

private:
    FormatErrorKind kind_;
};

class ByteWriter {
public:
    void put_u8(std::uint8_t v) { bytes_.push_back(v); }
    void put_u16(std::uint16_t v);
    void put_u32(std::uint32_t v);
    void put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    const std::vector<std::uint8_t>& bytes() const& { return bytes_; }
    std::vector<std::uint8_t> take() && { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Little-endian cursor over a byte buffer. Running off the end raises
/// FormatError(truncated_payload).
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    /// Checks the four-byte magic; short input counts as truncation.
    void expect_magic(std::string_view magic);
    void expect_version(std::uint16_t supported);

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(std::size_t n);

    std::size_t remaining() const { return bytes_.size() - pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }
    void expect_end(std::string_view container) const;

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace nsb
