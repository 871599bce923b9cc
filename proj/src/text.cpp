#include "gendermine/text.hpp"

#include <openssl/evp.h>
#include <unicode/locid.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include <array>
#include <stdexcept>

namespace gendermine::text {

namespace {

template <typename Fn>
bool for_each_code_point(std::string_view s, Fn&& fn) {
    const auto* p = reinterpret_cast<const uint8_t*>(s.data());
    const auto len = static_cast<int32_t>(s.size());
    int32_t i = 0;
    while (i < len) {
        UChar32 c;
        U8_NEXT(p, i, len, c);
        if (c < 0) return false;
        if (!fn(c)) return true;
    }
    return true;
}

} // namespace

bool is_valid_utf8(std::string_view s) {
    return for_each_code_point(s, [](UChar32) { return true; });
}

std::string to_lower(std::string_view s) {
    std::string out;
    icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())))
        .toLower(icu::Locale::getRoot())
        .toUTF8String(out);
    return out;
}

bool starts_uppercase(std::string_view s) {
    bool upper = false;
    for_each_code_point(s, [&](UChar32 c) {
        upper = u_isupper(c);
        return false;
    });
    return upper;
}

bool is_all_punct(std::string_view s) {
    if (s.empty()) return false;
    bool all = true;
    for_each_code_point(s, [&](UChar32 c) {
        all = all && u_ispunct(c);
        return all;
    });
    return all;
}

std::string trim(std::string_view s) {
    const auto ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int md_len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &md_len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string short_digest(std::string_view data, std::size_t width) {
    return sha256_hex(data).substr(0, width);
}

std::string detokenize(std::span<const std::string> tokens) {
    auto closing = [](const std::string& t) {
        return t == "." || t == "," || t == "?" || t == "!" || t == ":" || t == ";" || t == ")" || t == "]" ||
               t == "}" || t == "%";
    };
    auto opening = [](const std::string& t) { return t == "(" || t == "[" || t == "{"; };
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i > 0 && !closing(tokens[i]) && !opening(tokens[i - 1])) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        parts.emplace_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

std::string join(std::span<const std::string> parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace gendermine::text
