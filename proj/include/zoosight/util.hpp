#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace zoosight {

using Rng = std::mt19937_64;

// ---- text ----------------------------------------------------------------

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
std::vector<std::string> split(std::string_view text, char delimiter);
std::string join(std::span<const std::string> parts, std::string_view separator);

/// Replaces every occurrence of `placeholder` with `value`. The value is inserted verbatim and never rescanned.
std::string replace_all(std::string_view text, std::string_view placeholder, std::string_view value);

/// Single left-to-right pass over `tmpl`; substituted values are never rescanned for other placeholders.
std::string substitute(std::string_view tmpl,
                       std::initializer_list<std::pair<std::string_view, std::string_view>> bindings);

bool contains_ci(std::string_view haystack, std::string_view needle);

// ---- hashing / encoding ----------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);
std::uint64_t fnv1a64(std::string_view data);

/// Per-item seed that does not depend on processing order.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

// ---- randomness ------------------------------------------------------------

/// Unbiased draw from [0, n). Uses only the raw engine output so results are identical across standard libraries.
std::size_t uniform_index(Rng& rng, std::size_t n);
bool fair_coin(Rng& rng);

// ---- time ------------------------------------------------------------------

using Clock = std::chrono::system_clock;

std::string format_utc(Clock::time_point tp);
std::string now_utc();

/// Accepts ISO-8601 ("2024-03-01T12:00:05Z", optional fraction and offset) or plain seconds. Returns seconds since epoch.
double parse_timestamp(std::string_view text);

std::int64_t to_epoch_ms(Clock::time_point tp);
Clock::time_point from_epoch_ms(std::int64_t ms);

// ---- files -----------------------------------------------------------------

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
std::vector<std::string> read_lines(const std::string& path);

// ---- concurrency -----------------------------------------------------------

/// Runs fn(i) for i in [0, count) on up to `jobs` threads. jobs <= 1 runs inline in index order.
/// The first exception (by index) is rethrown after all workers finish.
void parallel_for(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& fn);

}  // namespace zoosight
