from lplab.main import main

main()
