#include <string>
#include <vector>

#include "loopsmc/cli.hpp"

int main(int argc, char **argv)
{
	std::vector<std::string> args(argv, argv + argc);
	return loopsmc::cli::run_cli(args);
}
