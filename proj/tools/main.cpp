#include "rsanet/cli.hpp"

int main(int argc, char** argv) { return rsanet::cli::run(argc, argv); }
