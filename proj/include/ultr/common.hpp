/*
 * Copyright 2026 The ultr-lab Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace ultr {

// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input text (LETOR lines, JSON documents).
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Well-formed input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration (including unsupported algorithm/paradigm pairs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A computation reached a singular or non-finite state.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Propensity estimation failed at a given (1-based) position.
class EstimationError : public Error {
 public:
  EstimationError(int position, const std::string& what)
      : Error("position " + std::to_string(position) + ": " + what), position_(position) {}
  int position() const { return position_; }

 private:
  int position_;
};

using Rng = std::mt19937_64;

// Learning paradigm: fixed logged lists (Off), lists sampled from the current
// model with Plackett-Luce (OnS), or ranked by it deterministically (OnD).
enum class Paradigm { kOff, kOnS, kOnD };

inline const char* to_string(Paradigm p) {
  switch (p) {
    case Paradigm::kOff: return "off";
    case Paradigm::kOnS: return "ons";
    case Paradigm::kOnD: return "ond";
  }
  return "?";
}

// Independent stream for (seed, stream id); used to give each worker or
// sub-component its own generator.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

template <typename E = PreconditionError, typename... Args>
void require(bool cond, Args&&... args) {
  if (!cond) throw E(concat(std::forward<Args>(args)...));
}

}  // namespace detail
}  // namespace ultr
