// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "harmodop/error.hpp"

namespace harmodop::io {

/// Append-only little-endian byte buffer.
class ByteWriter {
public:
    template <typename T>
        requires std::is_arithmetic_v<T>
    void put(T value)
    {
        auto raw = std::bit_cast<std::array<std::uint8_t, sizeof(T)>>(value);
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(raw.begin(), raw.end());
        }
        bytes_.insert(bytes_.end(), raw.begin(), raw.end());
    }

    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

    void put_string(std::string_view s)
    {
        put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        put_bytes(s);
    }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }
    std::vector<std::uint8_t>& bytes() noexcept { return bytes_; }

private:
    std::vector<std::uint8_t> bytes_;
};

/// Bounds-checked little-endian reader; truncation raises FormatError.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string what)
        : data_(data), what_(std::move(what)) {}

    template <typename T>
        requires std::is_arithmetic_v<T>
    T get()
    {
        require(sizeof(T));
        std::array<std::uint8_t, sizeof(T)> raw{};
        std::memcpy(raw.data(), data_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) {
            std::reverse(raw.begin(), raw.end());
        }
        pos_ += sizeof(T);
        return std::bit_cast<T>(raw);
    }

    std::string get_bytes(std::size_t n)
    {
        require(n);
        std::string out(reinterpret_cast<const char*>(data_.data() + pos_), n);
        pos_ += n;
        return out;
    }

    std::string get_string()
    {
        const auto n = get<std::uint32_t>();
        return get_bytes(n);
    }

    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return data_.size() - pos_; }

private:
    void require(std::size_t n) const
    {
        if (data_.size() - pos_ < n) {
            throw FormatError(what_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", " + std::to_string(data_.size() - pos_) +
                              " available)");
        }
    }

    std::span<const std::uint8_t> data_;
    std::string what_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// CRC-32 (IEEE 802.3), zlib polynomial.
std::uint32_t crc32(std::span<const std::uint8_t> bytes);
std::uint32_t crc32(std::string_view text);

}  // namespace harmodop::io
