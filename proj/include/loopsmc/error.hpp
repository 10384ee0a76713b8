#pragma once

#include <stdexcept>
#include <string>

namespace loopsmc {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error
{
  public:
	using std::runtime_error::runtime_error;
};

/// Violated precondition on a function argument.
class InvalidArgument : public Error
{
  public:
	using Error::Error;
};

class GeometryError : public Error
{
  public:
	using Error::Error;
};

/// Malformed or inconsistent input file (PDB, energy tables, sample files).
class DataError : public Error
{
  public:
	using Error::Error;
};

/// The particle population died out; carries the step diagnostics.
class ExtinctionError : public Error
{
  public:
	ExtinctionError(int step, const std::string &what)
		: Error("population extinct at step " + std::to_string(step) + ": " + what), step_(step)
	{
	}

	int step() const { return step_; }

  private:
	int step_;
};

} // namespace loopsmc
