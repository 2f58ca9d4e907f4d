from plunet.main import main

main()
