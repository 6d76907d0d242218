namespace rangerisk {}
