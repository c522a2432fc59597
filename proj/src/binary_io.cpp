#include "colearn/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "colearn/errors.hpp"

namespace colearn {

namespace {

void put_le(std::string& buf, std::uint64_t v, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
    }
}

}  // namespace

void ByteWriter::magic(std::string_view four_cc) { buf_.append(four_cc.substr(0, 4)); }
void ByteWriter::u8(std::uint8_t v) { put_le(buf_, v, 1); }
void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v, 4); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v, 8); }
void ByteWriter::i32(std::int32_t v) { put_le(buf_, static_cast<std::uint32_t>(v), 4); }
void ByteWriter::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v), 4); }
void ByteWriter::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v), 8); }

void ByteReader::require(std::uint64_t n, std::string_view what) const {
    if (remaining() < n) {
        throw FormatError(pos_, "truncated " + std::string(what) + ": expected " +
                                    std::to_string(pos_ + n) + " bytes, file has " +
                                    std::to_string(bytes_.size()));
    }
}

std::uint64_t ByteReader::take_le(std::size_t width) {
    require(width, "field");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += width;
    return v;
}

void ByteReader::expect_magic(std::string_view four_cc) {
    require(4, "magic");
    const std::string_view got = bytes_.substr(pos_, 4);
    if (got != four_cc) {
        throw FormatError(pos_, "bad magic: expected \"" + std::string(four_cc) + "\"");
    }
    pos_ += 4;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(take_le(1)); }
std::uint32_t ByteReader::u32() { return static_cast<std::uint32_t>(take_le(4)); }
std::uint64_t ByteReader::u64() { return take_le(8); }
std::int32_t ByteReader::i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(take_le(4))); }
float ByteReader::f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(take_le(4))); }
double ByteReader::f64() { return std::bit_cast<double>(take_le(8)); }

void ByteReader::expect_end() const {
    if (remaining() != 0) {
        throw FormatError(pos_, std::to_string(remaining()) + " trailing bytes: expected " +
                                    std::to_string(pos_) + " bytes, file has " +
                                    std::to_string(bytes_.size()));
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error reading " + path.string());
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("error writing " + path.string());
}

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace colearn
