from terrainmaker.pr_extensions.bruteforce import BruteForceRetriever
