#include "citekg/cli.hpp"

int main(int argc, char** argv) { return citekg::cli::run(argc, argv); }
