#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace zorank::service {

enum class RendererId { ColorSwatch, FourierCurve };

/// Which renderer, and the fixed parameters that make it a pure function of x.
struct RendererSpec {
  RendererId id = RendererId::ColorSwatch;
  /// fourier-curve: number of harmonics n, parameter dimension 2n.
  std::size_t harmonics = 3;
  /// Side length of the square output, pixels (or SVG user units).
  std::size_t size = 64;

  std::size_t dim() const { return id == RendererId::ColorSwatch ? 3 : 2 * harmonics; }
  std::string name() const;
  const char* media_type() const;
  void validate() const;
};

/// {"id": "color-swatch" | "fourier-curve", "harmonics": n, "size": px}
RendererSpec parse_renderer(const nlohmann::json& j);
nlohmann::json to_json(const RendererSpec& spec);

struct Payload {
  std::string media_type;
  std::string bytes;  // raw, not encoded

  /// {"media_type", "encoding": "base64", "data"}
  nlohmann::json to_json() const;
};

/// Throws std::invalid_argument on a dimension mismatch or non-finite input.
Payload render(const RendererSpec& spec, std::span<const double> x);

/// RGB bytes of the swatch: round(255 * sigmoid(x_i)) per channel.
std::array<unsigned char, 3> swatch_color(std::span<const double> x);

/// Radii of the curve r(theta) = exp(sum_j (a_j cos j theta + b_j sin j theta) / j)
/// at `samples` equally spaced angles, before scaling to the canvas.
std::vector<double> curve_radii(std::span<const double> x, std::size_t samples);

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace zorank::service
