#pragma once

#include <optional>
#include <string>

#include "expr.hpp"

namespace tc {

// Text grammar for linear combinations of complete or partial contractions:
//
//   lincomb := ["-"] term { ("+" | "-") term }
//   term    := [coef "*"] "contr" "(" {factor} ")"
//   factor  := {dgroup} kind "[" [idx {"," idx}] "]"
//   dgroup  := "D" "[" idx {"," idx} "]"
//            | "D" "^" "[" affine "]" "[" idx {"," idx} "]"
//   kind    := "R" | "Ric" | "Rm" | "W" | "P" | "psi" nat | "Omega" | "g"
//   idx     := letter+
//   coef    := rational-function expression in n over + - * / ^ ( )
//
// An index letter appearing twice denotes a contraction, once a free slot,
// three or more times is an error reported with its position. Free labels
// are assigned by alphabetical order of the free index names. "#" starts a
// comment through end of line. The sugared derivative group D^[k][r,s]
// expands each listed name X to X__1 .. X__k at the declared dimension
// (e.g. D^[n/2-2][r]); a name listed twice inside one sugared group pairs
// the expanded slots into Laplacians.
LinComb parse_lincomb(const std::string& text, std::optional<long> n = std::nullopt);

// Single contraction (one term, unit coefficient required).
Contraction parse_contraction(const std::string& text, std::optional<long> n = std::nullopt);

// Rational-function coefficient on its own.
DimRatio parse_coefficient(const std::string& text);

std::string print_lincomb(const LinComb& lc);
std::string print_contraction(const Contraction& c);
std::string print_term(const Term& t);

}  // namespace tc
