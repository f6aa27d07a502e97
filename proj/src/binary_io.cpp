#include "nsb/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace nsb {

std::string_view format_error_name(FormatErrorKind kind) {
    switch (kind) {
        case FormatErrorKind::bad_magic: return "bad magic";
        case FormatErrorKind::truncated_payload: return "truncated payload";
        case FormatErrorKind::version_mismatch: return "version mismatch";
        case FormatErrorKind::malformed: return "malformed";
    }
    return "unknown";
}

FormatError::FormatError(FormatErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(format_error_name(kind)) + ": " + what), kind_(kind) {}

void ByteWriter::put_u16(std::uint16_t v) {
    put_u8(static_cast<std::uint8_t>(v & 0xff));
    put_u8(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::put_u32(std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8) put_u8(static_cast<std::uint8_t>((v >> shift) & 0xff));
}

void ByteReader::need(std::size_t n) const {
    if (remaining() < n) {
        throw FormatError(FormatErrorKind::truncated_payload,
                          "needed " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) +
                              ", " + std::to_string(remaining()) + " left");
    }
}

void ByteReader::expect_magic(std::string_view magic) {
    const std::string got = bytes(magic.size());
    if (got != magic) {
        throw FormatError(FormatErrorKind::bad_magic, "expected \"" + std::string(magic) + "\"");
    }
}

void ByteReader::expect_version(std::uint16_t supported) {
    const auto v = u16();
    if (v != supported) {
        throw FormatError(FormatErrorKind::version_mismatch,
                          "version " + std::to_string(v) + ", supported " + std::to_string(supported));
    }
}

std::uint8_t ByteReader::u8() {
    need(1);
    return bytes_[pos_++];
}

std::uint16_t ByteReader::u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
}

std::uint32_t ByteReader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::string ByteReader::bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
}

void ByteReader::expect_end(std::string_view container) const {
    if (!at_end()) {
        throw FormatError(FormatErrorKind::malformed,
                          std::to_string(remaining()) + " trailing bytes in " + std::string(container));
    }
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
}

}  // namespace nsb
