// SPDX-License-Identifier: MIT OR Apache-2.0

//! Built-in entity lists for the synthetic corpora.

pub const FIRST_NAMES: &[&str] = &[
    "James",
    "Mary",
    "Robert",
    "Patricia",
    "John",
    "Jennifer",
    "Michael",
    "Linda",
    "David",
    "Elizabeth",
    "William",
    "Barbara",
    "Richard",
    "Susan",
    "Joseph",
    "Jessica",
    "Thomas",
    "Sarah",
    "Charles",
    "Karen",
    "Daniel",
    "Nancy",
    "Matthew",
    "Lisa",
    "Anthony",
    "Betty",
    "Mark",
    "Sandra",
    "Donald",
    "Ashley",
    "Steven",
    "Kimberly",
    "Paul",
    "Emily",
    "Andrew",
    "Donna",
    "Joshua",
    "Michelle",
    "Kenneth",
    "Carol",
    "Kevin",
    "Amanda",
    "Brian",
    "Melissa",
    "George",
    "Deborah",
    "Timothy",
    "Stephanie",
    "Ronald",
    "Rebecca",
    "Jason",
    "Sharon",
    "Edward",
    "Laura",
    "Jeffrey",
    "Cynthia",
    "Ryan",
    "Dorothy",
    "Jacob",
    "Amy",
];

pub const MIDDLE_NAMES: &[&str] = &[
    "Alan", "Grace", "Lee", "Marie", "Ray", "Anne", "Dean", "Rose", "Jay", "Lynn", "Cole", "Jane", "Wade", "Faye", "Reid", "Joy", "Blake",
    "Hope", "Troy", "June", "Kyle", "Dawn", "Seth", "Claire", "Grant", "Beth", "Miles", "Jean", "Drew", "Pearl", "Quinn", "Ivy", "Luke",
    "Eve", "Neil", "Skye", "Brooke", "Reese", "Shane", "Noel",
];

pub const LAST_NAMES: &[&str] = &[
    "Smith",
    "Johnson",
    "Williams",
    "Brown",
    "Jones",
    "Garcia",
    "Miller",
    "Davis",
    "Rodriguez",
    "Martinez",
    "Hernandez",
    "Lopez",
    "Gonzalez",
    "Wilson",
    "Anderson",
    "Taylor",
    "Moore",
    "Jackson",
    "Martin",
    "Perez",
    "Thompson",
    "White",
    "Harris",
    "Sanchez",
    "Clark",
    "Ramirez",
    "Lewis",
    "Robinson",
    "Walker",
    "Young",
    "Allen",
    "King",
    "Wright",
    "Scott",
    "Torres",
    "Nguyen",
    "Hill",
    "Flores",
    "Green",
    "Adams",
    "Nelson",
    "Baker",
    "Hall",
    "Rivera",
    "Campbell",
    "Mitchell",
    "Carter",
    "Roberts",
    "Gomez",
    "Phillips",
    "Evans",
    "Turner",
    "Diaz",
    "Parker",
    "Cruz",
    "Edwards",
    "Collins",
    "Reyes",
    "Stewart",
    "Morris",
    "Morales",
    "Murphy",
    "Cook",
    "Rogers",
    "Gutierrez",
    "Ortiz",
    "Morgan",
    "Cooper",
    "Peterson",
    "Bailey",
    "Reed",
    "Kelly",
    "Howard",
    "Ramos",
    "Kim",
    "Cox",
    "Ward",
    "Richardson",
    "Watson",
    "Brooks",
];

pub const CITIES: &[&str] = &[
    "New York",
    "Los Angeles",
    "Chicago",
    "Houston",
    "Phoenix",
    "Philadelphia",
    "San Antonio",
    "San Diego",
    "Dallas",
    "San Jose",
    "Austin",
    "Jacksonville",
    "Fort Worth",
    "Columbus",
    "Charlotte",
    "Indianapolis",
    "San Francisco",
    "Seattle",
    "Denver",
    "Nashville",
    "Oklahoma City",
    "El Paso",
    "Boston",
    "Portland",
    "Las Vegas",
    "Detroit",
    "Memphis",
    "Louisville",
    "Baltimore",
    "Milwaukee",
    "Albuquerque",
    "Tucson",
    "Fresno",
    "Sacramento",
    "Kansas City",
    "Mesa",
    "Atlanta",
    "Omaha",
    "Colorado Springs",
    "Raleigh",
    "Miami",
    "Minneapolis",
    "Tulsa",
    "Cleveland",
    "Wichita",
    "Arlington",
    "New Orleans",
    "Tampa",
    "Honolulu",
    "Pittsburgh",
];

pub const UNIVERSITIES: &[&str] = &[
    "Wesleyan University",
    "Stanford University",
    "Harvard University",
    "Yale University",
    "Princeton University",
    "Columbia University",
    "Cornell University",
    "Brown University",
    "Dartmouth College",
    "Duke University",
    "Rice University",
    "Emory University",
    "Tufts University",
    "Vanderbilt University",
    "Georgetown University",
    "Northwestern University",
    "Boston College",
    "Amherst College",
    "Williams College",
    "Swarthmore College",
    "Pomona College",
    "Bowdoin College",
    "Middlebury College",
    "Carleton College",
    "Oberlin College",
    "Grinnell College",
    "Colby College",
    "Bates College",
    "Hamilton College",
    "Vassar College",
    "Smith College",
    "Davidson College",
    "Colgate University",
    "Bucknell University",
    "Lehigh University",
    "Villanova University",
    "Fordham University",
    "Syracuse University",
    "Purdue University",
    "Clemson University",
    "Baylor University",
    "Auburn University",
    "Tulane University",
    "Rutgers University",
    "Drexel University",
    "Temple University",
    "Howard University",
    "Brandeis University",
    "Creighton University",
    "Gonzaga University",
    "Marquette University",
    "Butler University",
    "Xavier University",
    "Furman University",
    "Wake Forest University",
    "Rensselaer Polytechnic Institute",
    "Rochester Institute of Technology",
    "Massachusetts Institute of Technology",
    "Georgia Institute of Technology",
    "California Institute of Technology",
];

pub const MAJORS: &[&str] = &[
    "Computer Science",
    "Mechanical Engineering",
    "Biochemistry",
    "Philosophy",
    "Art History",
    "Creative Writing",
    "Business Administration",
    "Nursing",
    "Architecture",
    "Economics",
    "Psychology",
    "Sociology",
    "Anthropology",
    "Political Science",
    "Mathematics",
    "Statistics",
    "Physics",
    "Chemistry",
    "Biology",
    "Geology",
    "Geography",
    "Linguistics",
    "Music Theory",
    "Film Studies",
    "Journalism",
    "Marketing",
    "Accounting",
    "Finance",
    "Civil Engineering",
    "Electrical Engineering",
    "Chemical Engineering",
    "Environmental Science",
    "Public Health",
    "Physical Therapy",
    "Education",
    "Theology",
    "Astronomy",
    "Neuroscience",
    "Graphic Design",
    "International Relations",
];

/// Employer and the city of its headquarters.
pub const COMPANIES: &[(&str, &str)] = &[
    ("Microsoft", "Seattle"),
    ("Amazon", "Seattle"),
    ("Starbucks", "Seattle"),
    ("Nordstrom", "Seattle"),
    ("Boeing", "Chicago"),
    ("McDonalds", "Chicago"),
    ("Walgreens", "Chicago"),
    ("ExxonMobil", "Houston"),
    ("Chevron", "Houston"),
    ("Dell", "Austin"),
    ("Oracle", "Austin"),
    ("Tesla", "Austin"),
    ("American Airlines", "Fort Worth"),
    ("Southwest Airlines", "Dallas"),
    ("Texas Instruments", "Dallas"),
    ("Coca Cola", "Atlanta"),
    ("Delta Air Lines", "Atlanta"),
    ("Home Depot", "Atlanta"),
    ("Ford", "Detroit"),
    ("General Motors", "Detroit"),
    ("Comcast", "Philadelphia"),
    ("Aramark", "Philadelphia"),
    ("Intel", "San Jose"),
    ("Cisco", "San Jose"),
    ("Adobe", "San Jose"),
    ("Salesforce", "San Francisco"),
    ("Wells Fargo", "San Francisco"),
    ("Levi Strauss", "San Francisco"),
    ("Nike", "Portland"),
    ("Target", "Minneapolis"),
    ("General Mills", "Minneapolis"),
    ("Best Buy", "Minneapolis"),
    ("FedEx", "Memphis"),
    ("AutoZone", "Memphis"),
    ("Humana", "Louisville"),
    ("Yum Brands", "Louisville"),
    ("Goldman Sachs", "New York"),
    ("Pfizer", "New York"),
    ("Verizon", "New York"),
    ("IBM", "New York"),
    ("Disney", "Los Angeles"),
    ("Hulu", "Los Angeles"),
    ("Raytheon", "Arlington"),
    ("General Electric", "Boston"),
    ("Liberty Mutual", "Boston"),
    ("Wendys", "Columbus"),
    ("Nationwide", "Columbus"),
    ("Eli Lilly", "Indianapolis"),
    ("Bank of America", "Charlotte"),
    ("Duke Energy", "Charlotte"),
    ("Caesars Entertainment", "Las Vegas"),
    ("Harley Davidson", "Milwaukee"),
    ("Carnival", "Miami"),
    ("Ryder", "Miami"),
    ("ConocoPhillips", "Houston"),
];

pub const MONTHS: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

/// Single-token names for the relation-chain corpus.
pub const CHAIN_ENTITIES: &[&str] = &[
    "Avery", "Dominic", "Gerald", "Harriet", "Ingrid", "Jasper", "Kendra", "Lionel", "Marcus", "Nadia", "Oscar", "Priya", "Quentin",
    "Rosalind", "Silas", "Tamsin", "Ulric", "Vera", "Wesley", "Xander", "Yolanda", "Zachary", "Adrian", "Beatrice", "Cedric", "Delia",
    "Elliot", "Fiona", "Gideon", "Helena", "Isaac", "Juliet", "Kieran", "Leona", "Magnus", "Nora", "Otto", "Penelope", "Rufus", "Sabrina",
    "Tobias", "Ursula", "Vincent", "Wanda", "Yusuf", "Zelda", "Alma", "Boris", "Clara", "Desmond", "Edith", "Felix", "Greta", "Hugo",
    "Iris", "Julian", "Lena", "Milo", "Opal", "Perry",
];
