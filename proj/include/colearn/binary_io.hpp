#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace colearn {

/// Appends little-endian fields to a byte string.
class ByteWriter {
public:
    void magic(std::string_view four_cc);
    void u8(std::uint8_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i32(std::int32_t v);
    void f32(float v);
    void f64(double v);

    const std::string& bytes() const noexcept { return buf_; }
    std::string take() noexcept { return std::move(buf_); }

private:
    std::string buf_;
};

/// Reads little-endian fields; every read past the end throws FormatError
/// carrying the offset and the expected vs. actual length.
class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

    /// Throws FormatError if the next four bytes differ from `four_cc`.
    void expect_magic(std::string_view four_cc);
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int32_t i32();
    float f32();
    double f64();

    /// Fails early when fewer than `n` bytes remain.
    void require(std::uint64_t n, std::string_view what) const;

    std::uint64_t offset() const noexcept { return pos_; }
    std::uint64_t remaining() const noexcept { return bytes_.size() - pos_; }
    /// Throws FormatError if unread bytes remain.
    void expect_end() const;

private:
    std::uint64_t take_le(std::size_t width);

    std::string_view bytes_;
    std::uint64_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// 64-bit FNV-1a, used for the checksums printed by the CLI.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t v);

}  // namespace colearn
