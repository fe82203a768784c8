#pragma once

#include <sstream>
#include <string>
#include <vector>

#include "agentsynth/catalog.hpp"
#include "agentsynth/core/json.hpp"
#include "agentsynth/workflow.hpp"

namespace agentsynth::builtin {

/// A small travel / shopping / airline catalog, one tool record per line.
inline const char* demo_catalog_jsonl() {
    return R"JSONL({"name": "book_hotel", "description": "Book a hotel room in a city for a date range through a travel app.", "domain": "travel", "parameters": {"type": "object", "properties": {"app": {"type": "string", "description": "App used to place the booking"}, "city_slot": {"type": "string", "description": "City of the hotel"}, "hotel_slot": {"type": "string", "description": "Hotel name"}, "check_in_date_slot": {"type": "string", "description": "Check-in date"}, "departure_date_slot": {"type": "string", "description": "Check-out date"}, "number_slot": {"type": "string", "description": "Number of rooms"}, "payment_method_slot": {"type": "string", "description": "Payment method"}, "filter_detail_slot": {"type": "string", "description": "Extra filters"}}, "required": ["app", "city_slot", "hotel_slot", "check_in_date_slot", "departure_date_slot", "number_slot"]}, "returns": {"booking_id": {"type": "string", "description": "Booking number"}, "hotel_name": {"type": "string", "description": "Booked hotel"}, "reservation_status": {"type": "string", "description": "Reservation state"}, "total_price": {"type": "number", "description": "Total price"}}}
{"name": "search_location", "description": "Search for places such as restaurants near a location in an app, with a sort order.", "domain": "travel", "parameters": {"type": "object", "properties": {"app": {"type": "string", "description": "App used for the search"}, "search_info_slot": {"type": "string", "description": "What to search for"}, "order_type": {"type": "string", "description": "Sort order of the results"}}, "required": ["app", "search_info_slot"]}, "returns": {"places": {"type": "array", "description": "Matching places"}}}
{"name": "clear_cart", "description": "Remove every item from the shopping cart of a shopping app.", "domain": "shopping", "parameters": {"type": "object", "properties": {"app": {"type": "string", "description": "Shopping app"}}, "required": ["app"]}, "returns": {"status": {"type": "string", "description": "Whether the cart was cleared"}}}
{"name": "search_product", "description": "Search a shopping app for products matching a keyword.", "domain": "shopping", "parameters": {"type": "object", "properties": {"app": {"type": "string", "description": "Shopping app"}, "keyword": {"type": "string", "description": "Search keyword"}}, "required": ["app", "keyword"]}, "returns": {"product_id": {"type": "string", "description": "Best matching product"}, "price": {"type": "number", "description": "Product price"}}}
{"name": "add_to_cart", "description": "Add a product to the shopping cart of a shopping app.", "domain": "shopping", "parameters": {"type": "object", "properties": {"app": {"type": "string", "description": "Shopping app"}, "product_id": {"type": "string", "description": "Product to add"}, "quantity": {"type": "integer", "description": "How many"}}, "required": ["app", "product_id"]}, "returns": {"cart_status": {"type": "string", "description": "Cart update result"}}}
{"name": "search_flight", "description": "Search flights between two cities on a given date.", "domain": "airline", "parameters": {"type": "object", "properties": {"origin": {"type": "string", "description": "Departure city"}, "destination": {"type": "string", "description": "Arrival city"}, "date": {"type": "string", "description": "Travel date"}}, "required": ["origin", "destination", "date"]}, "returns": {"flight_id": {"type": "string", "description": "Cheapest matching flight"}, "price": {"type": "number", "description": "Fare"}}}
{"name": "book_flight", "description": "Book a seat on a flight for a passenger.", "domain": "airline", "parameters": {"type": "object", "properties": {"flight_id": {"type": "string", "description": "Flight to book"}, "passenger_name": {"type": "string", "description": "Passenger full name"}}, "required": ["flight_id", "passenger_name"]}, "returns": {"reservation_id": {"type": "string", "description": "New reservation"}, "booking_status": {"type": "string", "description": "Booking result"}}}
{"name": "get_user_details", "description": "Look up an airline user's profile, reservations and payment methods.", "domain": "airline", "parameters": {"type": "object", "properties": {"user_id": {"type": "string", "description": "User identifier"}}, "required": ["user_id"]}, "returns": {"reservation_id": {"type": "string", "description": "Most recent reservation"}, "payment_method": {"type": "string", "description": "Default payment method"}}}
{"name": "cancel_reservation", "description": "Cancel an airline reservation and refund it to the original payment method.", "domain": "airline", "parameters": {"type": "object", "properties": {"reservation_id": {"type": "string", "description": "Reservation to cancel"}}, "required": ["reservation_id"]}, "returns": {"status": {"type": "string", "description": "Cancellation result"}}}
{"name": "get_weather", "description": "Get the weather forecast for a city on a date.", "domain": "travel", "parameters": {"type": "object", "properties": {"city": {"type": "string", "description": "City"}, "date": {"type": "string", "description": "Forecast date"}}, "required": ["city", "date"]}, "returns": {"forecast": {"type": "string", "description": "Forecast summary"}}}
{"name": "send_email", "description": "Send an email message to a recipient.", "domain": "productivity", "parameters": {"type": "object", "properties": {"recipient": {"type": "string", "description": "Email address"}, "subject": {"type": "string", "description": "Subject line"}, "body": {"type": "string", "description": "Message body"}}, "required": ["recipient", "subject", "body"]}, "returns": {"message_id": {"type": "string", "description": "Sent message id"}, "delivery_status": {"type": "string", "description": "Delivery result"}}}
{"name": "create_calendar_event", "description": "Create a calendar event with a title at a time.", "domain": "productivity", "parameters": {"type": "object", "properties": {"title": {"type": "string", "description": "Event title"}, "start_time": {"type": "string", "description": "Start time"}}, "required": ["title", "start_time"]}, "returns": {"event_id": {"type": "string", "description": "New event"}}}
)JSONL";
}

/// Manual dependency edges the name/type rule cannot infer.
inline json demo_overrides() {
    return json::parse(R"({"add": [
        {"producer": "book_hotel", "consumer": "search_location", "output_field": "hotel_name", "parameter": "search_info_slot"}
    ]})");
}

inline Catalog demo_catalog() {
    std::istringstream in(demo_catalog_jsonl());
    return load_catalog_jsonl(in);
}

/// Gold workflows for orchestration samples.
inline std::vector<GoldWorkflow> workflow_tasks() {
    return {
        {"Which national park near Denver has good weather and an open campsite this weekend?",
         {"Find the national parks within a three hour drive of Denver.",
          "Check the weekend weather forecast for each of those parks.",
          "Look up campsite availability at each of those parks for the weekend.",
          "Pick the park that has both good weather and an open campsite."},
         {{1, 2}, {1, 3}, {2, 4}, {3, 4}}},
        {"What instrument did the composer of the opera Rusalka mainly play?",
         {"Identify the composer of the opera Rusalka.",
          "Search the composer's biography for the instruments he played.",
          "Determine which instrument he played most often."},
         {{1, 2}, {2, 3}}},
        {"Is the river that flows through Vienna longer than the Rhine?",
         {"Identify the major river that flows through Vienna.",
          "Find the length of that river.",
          "Find the length of the Rhine.",
          "Compare the two lengths."},
         {{1, 2}, {2, 4}, {3, 4}}},
        {"In which year was the university attended by the author of Norwegian Wood founded?",
         {"Identify the author of the novel Norwegian Wood.",
          "Find the university that author attended.",
          "Look up the founding year of that university."},
         {{1, 2}, {2, 3}}},
        {"what is the population of the capital of australia",
         {"Identify the capital city of Australia.",
          "Search for the most recent population figure of that city."},
         {{1, 2}}},
        {"Which of the two directors of the films Alien and Heat is older?",
         {"Identify the director of the film Alien.",
          "Identify the director of the film Heat.",
          "Find the birth dates of both directors.",
          "Compare the birth dates and name the older director."},
         {{1, 3}, {2, 3}, {3, 4}}},
        {"who won the most recent world cup final and by what score",
         {"Search for the most recent FIFA World Cup final."},
         {}},
        {"Which airline operates the most direct flights from Lisbon to Toronto, and what aircraft does it use?",
         {"List the airlines with direct flights from Lisbon to Toronto.",
          "Count the weekly direct flights for each airline.",
          "Identify the airline with the most weekly direct flights.",
          "Find the aircraft type that airline uses on the route."},
         {{1, 2}, {2, 3}, {3, 4}}},
    };
}

/// Extra api entries unrelated to any task, used as distractors.
inline std::vector<std::string> workflow_distractor_pool() {
    std::vector<std::string> pool = {
        "Identify the author of the first Sherlock Holmes novel.",
        "Determine the tallest mountain in the Alps.",
        "Find the year the Eiffel Tower was completed.",
        "Search for the chemical symbol of tungsten.",
        "Identify which county the Sheep Range in Nevada lies in.",
        "Look up the current exchange rate between the euro and the yen.",
        "Determine the primary language spoken in Andorra.",
        "Find the release date of the first iPhone.",
    };
    for (const auto& t : workflow_tasks())
        for (const auto& s : t.steps) pool.push_back(s);
    return pool;
}

/// Orchestration prompt: system prompt, two worked examples, then the task.
inline WorkflowPromptConfig workflow_prompt() {
    WorkflowPromptConfig cfg;
    cfg.system_prompt =
        "You are a helpful task planner.\nFirst I will give you the task description and actions list you can take to "
        "finish the task, and your task is to plan a sequence of nodes which are subtasks to achieve the task. Each node "
        "of workflow is a subtask, and you can take actions to complete the subtask.\nAfter you construct the plan, since "
        "some subtasks may not be dependent on each other, while others may have dependencies, please convert these nodes "
        "of subtasks into a topology diagram based on the task relevance in the workflow. The Graph should start with "
        "START node, and end with END node. \nKeep your output in foramt:\nNode:\n1.{subtask_1}\n2.{subtask_2}\n...\n"
        "Edges:\n(START,1)\n...\n(n,END))";
    cfg.examples_preamble = "Here are two examples. You need to strictly follow the format provided in the examples.";
    cfg.task_preamble = "Now it's your turn.";
    cfg.examples = {
        {"In addition to the individual born in April 1963, what other artist did critics compare The Advent's energetic "
         "update of original techno to?",
         {"Search for critical commentary comparing The Advent's energetic update of original techno to other artists.",
          "Identify the individual born in April 1963 referenced in the question.",
          "What is the primary purpose for which the Finnish Hound was bred?",
          "Extract the name(s) of the artist(s) who were compared to The Advent by critics, excluding the individual "
          "identified in step 1.",
          "Determine the specific city where this group was formed in 1968."},
         "Node:\n1: Identify the individual born in April 1963 referenced in the question.\n2: Search for critical "
         "commentary comparing The Advent's energetic update of original techno to other artists.\n3: Extract the name(s) "
         "of the artist(s) who were compared to The Advent by critics, excluding the individual identified in step 1.\n"
         "Edge: (START,1) (START,2) (1,3) (2,3) (3,END)"},
        {"when did the battle of antietam take place",
         {"Identify which county in Nevada the Sheep Range is located.",
          "Search for the Battle of Antietam to determine the exact date it occurred.",
          "Identify a romantic comedy written by Habib Faisal.",
          "What is the location (region, range, or district) of the Masherbrum mountain in Pakistan?"},
         "Node:\n1: Search for the Battle of Antietam to determine the exact date it occurred.\nEdge: (START,1) (1,END)"},
    };
    return cfg;
}

}  // namespace agentsynth::builtin
