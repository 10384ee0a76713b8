#pragma once

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>

#include "loopsmc/error.hpp"

namespace loopsmc {

/// Lower-case hex SHA-256 of a byte string.
inline std::string sha256_hex(std::string_view data)
{
	std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
	unsigned char md[EVP_MAX_MD_SIZE];
	unsigned int len = 0;
	if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
	    EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
		throw Error("SHA-256 computation failed");
	std::string hex;
	char buf[3];
	for (unsigned int i = 0; i < len; ++i)
	{
		std::snprintf(buf, sizeof buf, "%02x", md[i]);
		hex += buf;
	}
	return hex;
}

inline std::string read_file(const std::string &path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw DataError("cannot open " + path);
	return std::string(std::istreambuf_iterator<char>(in), {});
}

inline std::string sha256_file(const std::string &path) { return sha256_hex(read_file(path)); }

} // namespace loopsmc
