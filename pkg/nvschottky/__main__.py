from nvschottky.cli import nvschottky

if __name__ == '__main__':
    nvschottky()
