#pragma once

// Counter-based random streams: every (seed, key...) tuple names an
// independent SplitMix64 sequence, so draws never depend on thread schedule.

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "loopsmc/geometry.hpp"

namespace loopsmc {

inline constexpr uint64_t splitmix64(uint64_t x)
{
	x += 0x9e3779b97f4a7c15ull;
	x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
	x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
	return x ^ (x >> 31);
}

inline uint64_t stream_key(uint64_t seed, std::initializer_list<uint64_t> parts)
{
	uint64_t h = splitmix64(seed);
	for (uint64_t p : parts)
		h = splitmix64(h ^ splitmix64(p + 0x632be59bd9b4e019ull));
	return h;
}

class Stream
{
  public:
	explicit Stream(uint64_t key) : state_(key) {}
	Stream(uint64_t seed, std::initializer_list<uint64_t> parts) : state_(stream_key(seed, parts)) {}

	uint64_t next()
	{
		state_ += 0x9e3779b97f4a7c15ull;
		uint64_t z = state_;
		z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
		z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
		return z ^ (z >> 31);
	}

	/// Uniform on [0, 1) with 53 random bits.
	double uniform() { return double(next() >> 11) * 0x1.0p-53; }

	/// Standard normal (Box–Muller, no cached second value).
	double normal()
	{
		double u1 = 1.0 - uniform(); // (0, 1]
		double u2 = uniform();
		return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
	}

  private:
	uint64_t state_;
};

// Stream purposes, mixed into every key.
enum class StreamTag : uint64_t
{
	omega = 1,
	chi = 2,
	rotamer_subset = 3,
	joint_subset = 4,
	resample = 5,
	finalize = 6,
	bridge_omega = 7,
	subsample = 8,
};

inline Stream make_stream(uint64_t seed, StreamTag tag, uint64_t a = 0, uint64_t b = 0, uint64_t c = 0)
{
	return Stream(seed, {uint64_t(tag), a, b, c});
}

} // namespace loopsmc
