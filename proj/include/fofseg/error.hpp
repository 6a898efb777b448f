#ifndef FOFSEG_ERROR_HPP
#define FOFSEG_ERROR_HPP

#include <stdexcept>
#include <string>

namespace fofseg {

enum class Errc {
  bad_magic,
  truncated,
  non_finite,
  dimension_overflow,
  io_failure,
  unsupported_format,
  dimension_mismatch,
  empty_pixel_set,
  empty_input,
  non_binary_mask,
  invalid_spec,
  invalid_config,
  invalid_argument,
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::bad_magic: return "BadMagic";
    case Errc::truncated: return "Truncated";
    case Errc::non_finite: return "NonFinite";
    case Errc::dimension_overflow: return "DimensionOverflow";
    case Errc::io_failure: return "IoFailure";
    case Errc::unsupported_format: return "UnsupportedFormat";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::empty_pixel_set: return "EmptyPixelSet";
    case Errc::empty_input: return "EmptyInput";
    case Errc::non_binary_mask: return "NonBinaryMask";
    case Errc::invalid_spec: return "InvalidSpec";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace fofseg

#endif  // FOFSEG_ERROR_HPP
