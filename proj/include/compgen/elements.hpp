#pragma once

/// @file
/// The 94 elements from H to Pu, indexed by atomic number.

#include <array>
#include <optional>
#include <string_view>

namespace compgen {

inline constexpr std::array<std::string_view, 94> element_symbols{
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni",
    "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo",
    "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba",
    "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb",
    "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
    "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu"};

/// Atomic number of `symbol`, or nullopt outside H..Pu.
inline std::optional<int> atomic_number(std::string_view symbol) {
    for (std::size_t i = 0; i < element_symbols.size(); ++i) {
        if (element_symbols[i] == symbol) {
            return static_cast<int>(i) + 1;
        }
    }
    return std::nullopt;
}

inline bool is_element(std::string_view symbol) { return atomic_number(symbol).has_value(); }

} // namespace compgen
