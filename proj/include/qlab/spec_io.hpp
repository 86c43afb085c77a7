/**
 * \file spec_io.hpp
 * \brief Reading and writing ProblemSpec documents in JSON.
 *
 * Field names follow the symbols of the equation (k1, k1p, k1pp, k2, D1, D2,
 * Delta, d, delta, delta_tilde, lambda1, lambda2, mu2, Q, R, mu, beta, alpha,
 * rho, epsilon0, ...). Polynomials are coefficient lists, lowest degree first,
 * whose entries are numbers or [re, im] pairs. Exponents are rationals given
 * as integers, decimal numbers or strings such as "3/2".
 */
#pragma once

#include <string>

#include "qlab/problem.hpp"

namespace qlab {

/// Parses a spec document; throws InputError naming the line/column or the offending field.
ProblemSpec parse_spec(const std::string& text, const std::string& source = "<string>");
/// Reads and parses the file at path; throws InputError if it cannot be read.
ProblemSpec load_spec(const std::string& path);
/// Serializes a spec so that parse_spec(dump_spec(s)) reproduces s.
std::string dump_spec(const ProblemSpec& s);

}  // namespace qlab
