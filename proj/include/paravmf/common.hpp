#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace paravmf {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using TokenId = std::int32_t;

/// The language being paraphrased is always L1; L2 is the pivot language of the
/// parallel corpus.
enum class Lang : std::uint8_t { L1 = 0, L2 = 1 };

inline std::string_view lang_name(Lang lang) { return lang == Lang::L1 ? "L1" : "L2"; }
Lang parse_lang(std::string_view text);
inline Lang other(Lang lang) { return lang == Lang::L1 ? Lang::L2 : Lang::L1; }

// Error taxonomy. The CLI maps ConfigError/UsageError to the usage exit code and
// everything else to the generic failure code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ParseError : Error {
  ParseError(const std::string& what, std::size_t offset)
      : Error(what + " at offset " + std::to_string(offset)), offset(offset) {}
  std::size_t offset;
};
struct NonFiniteError : Error {
  using Error::Error;
};

}  // namespace paravmf
