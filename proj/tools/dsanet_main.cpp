#include "dsanet/cli.hpp"

int main(int argc, char** argv) { return dsanet::cli::run(argc, argv); }
