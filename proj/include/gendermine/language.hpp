#pragma once

#include <array>
#include <string_view>

namespace gendermine {

enum class Language { Fr, De, Es, Ru };
inline constexpr std::array<Language, 4> kLanguages{Language::Fr, Language::De, Language::Es, Language::Ru};

std::string_view language_code(Language l);
// Throws ConfigError for anything outside fr/de/es/ru.
Language parse_language(std::string_view code);

} // namespace gendermine
