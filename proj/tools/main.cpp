#include "cmrplan/cli.hpp"

int main(int argc, char** argv) { return cmrplan::cli::run(argc, argv); }
