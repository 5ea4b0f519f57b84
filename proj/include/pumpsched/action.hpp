#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace pumpsched {

// The discrete action set: one of the four distribution pumps, or none.
enum class Action : std::uint8_t { NP1 = 0, NP2 = 1, NP3 = 2, NP4 = 3, NOP = 4 };

inline constexpr std::size_t kActionCount = 5;
inline constexpr std::size_t kPumpCount = 4;

inline constexpr std::array<Action, kActionCount> kAllActions{
    Action::NP1, Action::NP2, Action::NP3, Action::NP4, Action::NOP};

constexpr std::size_t index_of(Action a) noexcept { return static_cast<std::size_t>(a); }

constexpr Action action_from_index(std::size_t i) noexcept { return static_cast<Action>(i); }

constexpr bool is_pump(Action a) noexcept { return a != Action::NOP; }

constexpr std::string_view to_string(Action a) noexcept
{
    switch (a) {
    case Action::NP1: return "NP1";
    case Action::NP2: return "NP2";
    case Action::NP3: return "NP3";
    case Action::NP4: return "NP4";
    case Action::NOP: return "NOP";
    }
    return "NOP";
}

constexpr std::optional<Action> parse_action(std::string_view s) noexcept
{
    for (Action a : kAllActions) {
        if (to_string(a) == s) return a;
    }
    return std::nullopt;
}

// Number of pumps whose ON/OFF status differs between two consecutive actions.
constexpr int pump_toggles(Action from, Action to) noexcept
{
    if (from == to) return 0;
    return (is_pump(from) ? 1 : 0) + (is_pump(to) ? 1 : 0);
}

} // namespace pumpsched
