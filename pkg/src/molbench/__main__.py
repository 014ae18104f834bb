from molbench.cli import main

main()
