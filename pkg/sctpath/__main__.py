from sctpath.cli import main

main()
