#include "zorank/service/render.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include <png.h>

namespace zorank::service {

std::string RendererSpec::name() const {
  return id == RendererId::ColorSwatch ? "color-swatch" : "fourier-curve";
}

const char* RendererSpec::media_type() const {
  return id == RendererId::ColorSwatch ? "image/png" : "image/svg+xml";
}

void RendererSpec::validate() const {
  if (size < 8 || size > 1024) throw std::invalid_argument("renderer.size: must lie in [8, 1024]");
  if (id == RendererId::FourierCurve && (harmonics < 1 || harmonics > 64)) {
    throw std::invalid_argument("renderer.harmonics: must lie in [1, 64]");
  }
}

RendererSpec parse_renderer(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("renderer: expected an object");
  for (const auto& [key, value] : j.items()) {
    if (key != "id" && key != "harmonics" && key != "size") {
      throw std::invalid_argument("renderer." + key + ": unknown field");
    }
  }
  RendererSpec spec;
  try {
    const std::string id = j.at("id").get<std::string>();
    if (id == "color-swatch") {
      spec.id = RendererId::ColorSwatch;
      spec.size = 64;
    } else if (id == "fourier-curve") {
      spec.id = RendererId::FourierCurve;
      spec.size = 128;
    } else {
      throw std::invalid_argument("renderer.id: unknown renderer '" + id +
                                  "' (expected color-swatch or fourier-curve)");
    }
    if (j.contains("harmonics")) {
      if (spec.id != RendererId::FourierCurve) {
        throw std::invalid_argument("renderer.harmonics: only fourier-curve takes harmonics");
      }
      spec.harmonics = j.at("harmonics").get<std::size_t>();
    }
    if (j.contains("size")) spec.size = j.at("size").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("renderer: ") + e.what());
  }
  spec.validate();
  return spec;
}

nlohmann::json to_json(const RendererSpec& spec) {
  nlohmann::json j = {{"id", spec.name()}, {"size", spec.size}, {"dim", spec.dim()}};
  if (spec.id == RendererId::FourierCurve) j["harmonics"] = spec.harmonics;
  return j;
}

nlohmann::json Payload::to_json() const {
  return {{"media_type", media_type}, {"encoding", "base64"}, {"data", base64_encode(bytes)}};
}

namespace {

void check_input(const RendererSpec& spec, std::span<const double> x) {
  if (x.size() != spec.dim()) {
    throw std::invalid_argument(spec.name() + ": expected " + std::to_string(spec.dim()) +
                                " parameters, got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument(spec.name() + ": non-finite parameter");
  }
}

void append_png(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::string*>(png_get_io_ptr(png));
  out->append(reinterpret_cast<const char*>(data), length);
}

void flush_png(png_structp) {}

std::string encode_rgb_png(std::size_t width, std::size_t height,
                           const std::vector<unsigned char>& rgb) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw std::runtime_error("png: cannot allocate writer");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png: cannot allocate info");
  }
  std::string out;
  std::vector<png_bytep> rows(height);
  for (std::size_t y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(rgb.data() + y * width * 3);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("png: encoding failed");
  }
  png_set_write_fn(png, &out, append_png, flush_png);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 9);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Payload render_swatch(const RendererSpec& spec, std::span<const double> x) {
  const auto color = swatch_color(x);
  std::vector<unsigned char> rgb(spec.size * spec.size * 3);
  for (std::size_t i = 0; i < spec.size * spec.size; ++i) {
    rgb[3 * i] = color[0];
    rgb[3 * i + 1] = color[1];
    rgb[3 * i + 2] = color[2];
  }
  return {spec.media_type(), encode_rgb_png(spec.size, spec.size, rgb)};
}

constexpr std::size_t kCurveSamples = 256;

Payload render_curve(const RendererSpec& spec, std::span<const double> x) {
  const std::vector<double> radii = curve_radii(x, kCurveSamples);
  double peak = 0.0;
  for (double r : radii) {
    if (!std::isfinite(r)) throw std::invalid_argument("fourier-curve: coefficients overflow");
    peak = std::max(peak, r);
  }
  // Scale so the farthest point sits at 45% of the canvas from the center.
  const double half = static_cast<double>(spec.size) / 2.0;
  const double scale = 0.9 * half / peak;
  std::string path;
  char buf[64];
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(radii.size());
    std::snprintf(buf, sizeof buf, "%s%.3f %.3f ", i == 0 ? "M" : "L",
                  half + scale * radii[i] * std::cos(theta), half - scale * radii[i] * std::sin(theta));
    path += buf;
  }
  path += "Z";
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(spec.size) +
                    "\" height=\"" + std::to_string(spec.size) + "\" viewBox=\"0 0 " +
                    std::to_string(spec.size) + " " + std::to_string(spec.size) + "\">" +
                    "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>" + "<path d=\"" + path +
                    "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/></svg>";
  return {spec.media_type(), std::move(svg)};
}

}  // namespace

std::array<unsigned char, 3> swatch_color(std::span<const double> x) {
  std::array<unsigned char, 3> rgb{};
  for (std::size_t c = 0; c < 3; ++c) {
    const double s = 1.0 / (1.0 + std::exp(-x[c]));
    rgb[c] = static_cast<unsigned char>(std::lround(255.0 * s));
  }
  return rgb;
}

std::vector<double> curve_radii(std::span<const double> x, std::size_t samples) {
  const std::size_t n = x.size() / 2;
  std::vector<double> radii(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(samples);
    double exponent = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const double jd = static_cast<double>(j);
      exponent += (x[2 * (j - 1)] * std::cos(jd * theta) + x[2 * (j - 1) + 1] * std::sin(jd * theta)) / jd;
    }
    radii[i] = std::exp(exponent);
  }
  return radii;
}

Payload render(const RendererSpec& spec, std::span<const double> x) {
  check_input(spec, x);
  return spec.id == RendererId::ColorSwatch ? render_swatch(spec, x) : render_curve(spec, x);
}

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const auto v = (static_cast<unsigned char>(bytes[i]) << 16) |
                   (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                   static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const auto v = static_cast<unsigned char>(bytes[i]) << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (rest == 2) {
    const auto v = (static_cast<unsigned char>(bytes[i]) << 16) |
                   (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length is not a multiple of 4");
  std::string out;
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int quad[4];
    int pad = 0;
    for (int q = 0; q < 4; ++q) {
      const char c = text[i + static_cast<std::size_t>(q)];
      if (c == '=' && i + 4 == text.size() && q >= 2) {
        quad[q] = 0;
        ++pad;
      } else {
        quad[q] = value(c);
        if (quad[q] < 0 || pad > 0) throw std::invalid_argument("base64: invalid character");
      }
    }
    const int v = (quad[0] << 18) | (quad[1] << 12) | (quad[2] << 6) | quad[3];
    out += static_cast<char>((v >> 16) & 0xFF);
    if (pad < 2) out += static_cast<char>((v >> 8) & 0xFF);
    if (pad < 1) out += static_cast<char>(v & 0xFF);
  }
  return out;
}

}  // namespace zorank::service
